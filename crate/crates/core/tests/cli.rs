use std::path::Path;
use std::process::{Command, Output};

use harvest::report::{self, AnyReport};
use harvest::simulate::{self, SimSpec};

const BIN: &str = env!("CARGO_BIN_EXE_harvest");

fn harvest(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("HARVEST_WORKERS", "1")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn toy_csv(dir: &Path) -> String {
    let mut spec = SimSpec::reference(60, 4);
    spec.p = 10;
    spec.beta = vec![3.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    spec.blocks = vec![];
    spec.error_variance = 1.0;
    let ds = simulate::gen_replication(&spec, 0).unwrap();
    let path = dir.join("toy.csv");
    ds.write_csv(std::fs::File::create(&path).unwrap(), "y").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn screen_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_csv(dir.path());
    let out = dir.path().join("r.json");
    let o = harvest(&[
        "screen", "--input", &csv, "--outcome", "y", "--k", "3", "--n-subsets", "400",
        "--output", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("feature") && text.contains("p_adj"), "{text}");
    // Survivors listed by ascending p: the two planted features lead.
    let rows: Vec<&str> = text
        .lines()
        .skip_while(|l| !l.starts_with("feature"))
        .skip(1)
        .take(2)
        .collect();
    let mut leading: Vec<&str> = rows.iter().map(|l| l.split_whitespace().next().unwrap()).collect();
    leading.sort();
    assert_eq!(leading, ["f0", "f3"], "{text}");

    match report::load(&out).unwrap() {
        AnyReport::Screen(r) => {
            assert_eq!(r.version, env!("CARGO_PKG_VERSION"));
            assert_eq!(r.config.harvest.subset_size, 3);
            assert_eq!(r.result.rounds[0].n_subsets, 400);
            let kept: Vec<&str> = r.result.final_features.iter().map(|f| f.name.as_str()).collect();
            assert!(kept.contains(&"f0") && kept.contains(&"f3"));
        }
        other => panic!("unexpected report {other:?}"),
    }
}

#[test]
fn screen_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_csv(dir.path());
    let out = dir.path().join("r.json");
    let out = out.to_str().unwrap();

    let o = harvest(&["screen", "--input", &csv, "--outcome", "target", "--output", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("target"), "{}", stderr(&o));

    let o = harvest(&["screen", "--input", &csv, "--outcome", "y", "--alpha", "1.0", "--output", out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha"));

    let o = harvest(&["screen", "--input", "missing.csv", "--outcome", "y", "--output", out]);
    assert_eq!(o.status.code(), Some(2));

    let o = harvest(&["screen", "--input", &csv, "--outcome", "y", "--k", "11", "--output", out]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let o = harvest(&["screen", "--input", &csv, "--outcome", "y", "--learner", "bogus"]);
    assert_eq!(o.status.code(), Some(1));

    // Continuous outcome read as binary for the logistic learner.
    let o = harvest(&["screen", "--input", &csv, "--outcome", "y", "--learner", "logistic", "--output", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("non-binary"), "{}", stderr(&o));

    let o = harvest(&["screen", "--input", &csv, "--outcome", "y", "--output", "/no/such/dir/r.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("output"));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_csv(dir.path());
    let out = dir.path().join("r.json");
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "input = {csv:?}\noutcome = \"y\"\noutput = {:?}\nseed = 11\n\n[harvest]\nalpha = 0.01\nsubset_size = 4\nn_subsets = 300\nadjustment = \"bonferroni\"\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = harvest(&["screen", "--config", cfg.to_str().unwrap(), "--alpha", "0.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let AnyReport::Screen(r) = report::load(&out).unwrap() else {
        panic!("wrong report kind")
    };
    let h = &r.config.harvest;
    assert_eq!((h.alpha, h.subset_size, h.n_subsets, h.seed), (0.1, 4, Some(300), 11));
    assert_eq!(h.adjustment, harvest::ranktest::Adjustment::Bonferroni);

    std::fs::write(&cfg, "input = 'x.csv'\noutcome = 'y'\n[harvest]\nalfa = 0.1\n").unwrap();
    let o = harvest(&["screen", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alfa"), "{}", stderr(&o));
}

#[test]
fn compare_mode_reads_back_reports() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_csv(dir.path());
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let base = ["screen", "--input", &csv, "--outcome", "y", "--k", "3", "--n-subsets", "300"];
    let run = |out: &Path, extra: &[&str]| {
        let mut args: Vec<&str> = base.to_vec();
        args.extend_from_slice(&["--output", out.to_str().unwrap()]);
        args.extend_from_slice(extra);
        harvest(&args)
    };
    assert!(run(&a, &[]).status.success());
    let o = run(&b, &["--compare", a.to_str().unwrap()]);
    assert!(stdout(&o).contains("identical to"), "{}", stdout(&o));
    let o = run(&b, &["--seed", "9", "--compare", a.to_str().unwrap()]);
    assert!(stdout(&o).contains("differs from"), "{}", stdout(&o));
}

#[test]
fn split_reports_holdout_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let csv = toy_csv(dir.path());
    let out = dir.path().join("r.json");
    let o = harvest(&[
        "screen", "--input", &csv, "--outcome", "y", "--k", "3", "--n-subsets", "300", "--split", "0.8",
        "--output", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let AnyReport::Screen(r) = report::load(&out).unwrap() else {
        panic!("wrong report kind")
    };
    let h = r.holdout.unwrap();
    assert_eq!((h.train_rows, h.holdout_rows), (48, 12));
    assert!(h.holdout_accuracy.unwrap() > 0.5);
    assert!(stdout(&o).contains("holdout"));
}

#[test]
fn logistic_screen_on_binary_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bin.csv");
    let mut text = String::from("a,b,c,d,e,label\n");
    for i in 0..80 {
        let x = (i as f64 * 0.7).sin();
        let noise = [(i as f64 * 1.3).cos(), (i as f64 * 2.9).sin(), (i as f64 * 0.31).cos(), (i as f64 * 5.1).sin()];
        let label = u8::from(x + 0.3 * noise[0] > 0.0);
        text.push_str(&format!("{x},{},{},{},{},{label}\n", noise[0], noise[1], noise[2], noise[3]));
    }
    std::fs::write(&path, text).unwrap();
    let out = dir.path().join("r.json");
    let o = harvest(&[
        "screen", "--input", path.to_str().unwrap(), "--outcome", "label", "--learner", "logistic",
        "--k", "2", "--n-subsets", "200", "--output", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let AnyReport::Screen(r) = report::load(&out).unwrap() else {
        panic!("wrong report kind")
    };
    assert!(r.result.final_features.iter().any(|f| f.name == "a"));
}

#[test]
fn plan_examples() {
    let o = harvest(&["plan", "--p", "1000", "--k", "20", "--coverage", "100"]);
    assert!(stdout(&o).contains("n = 5000\n") && stdout(&o).contains("sd = 10\n"));
    let o = harvest(&["plan", "--p", "40", "--k", "15", "--coverage", "100"]);
    assert!(stdout(&o).contains("n = 267\n"));
    let o = harvest(&["plan", "--p", "10", "--k", "20", "--coverage", "100"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn reduced_reproduction_is_labelled_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t2.json");
    let args = [
        "reproduce", "table2", "--replications", "10", "--seed", "42", "--output", out.to_str().unwrap(),
    ];
    let first = harvest(&args);
    assert!(first.status.success(), "{}", stderr(&first));
    let text = stdout(&first);
    assert!(text.contains("reduced"), "{text}");
    assert!(text.contains("94.0") && text.contains("99.0"), "{text}");
    let second = harvest(&args);
    assert_eq!(text, stdout(&second));
    match report::load(&out).unwrap() {
        AnyReport::Reproduce(r) => {
            assert!(r.reduced);
            assert_eq!(r.spec.replications, 10);
            assert_eq!(r.spec.seed, 42);
            assert_eq!(r.summary.per_feature_selection_counts.len(), 40);
        }
        other => panic!("unexpected report {other:?}"),
    }
}

#[test]
fn reproduce_rejects_data_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "input = 'x.csv'\n").unwrap();
    let o = harvest(&["reproduce", "table1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
