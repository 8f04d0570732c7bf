//! The `harvest` command: `screen`, `reproduce` and `plan`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime error.

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{self, ConfigError, ConfigFile, Merged, Overrides, ScreenConfig};
use crate::dataset::{self, Dataset};
use crate::harvest::{self, HarvestError, HarvestReport};
use crate::learners::{self, LearnerError, LearnerKind};
use crate::ranktest::Adjustment;
use crate::report::{self, AnyReport, DatasetInfo, HoldoutReport, ReproduceReport, ScreenReport};
use crate::sampler::{self, derive_seed, FeatureSubset};
use crate::simulate::{self, Comparison, SimError, SimSpec};

const SPLIT_TAG: u64 = 0x0053_504c_4954;

/// Seed for `reproduce` when none is given.
pub const DEFAULT_STUDY_SEED: u64 = 20180114;

/// Replications in the published study.
pub const FULL_REPLICATIONS: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "harvest", version, about = "Screen features by ranking random feature subsets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Screen the features of a CSV file.
    Screen(ScreenArgs),
    /// Rerun the published simulation study and compare with its table.
    Reproduce(ReproduceArgs),
    /// Number of subsets needed for a target coverage per feature.
    Plan(PlanArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdjustArg {
    None,
    Bonferroni,
    Bh,
}

impl From<AdjustArg> for Adjustment {
    fn from(a: AdjustArg) -> Self {
        match a {
            AdjustArg::None => Adjustment::None,
            AdjustArg::Bonferroni => Adjustment::Bonferroni,
            AdjustArg::Bh => Adjustment::BenjaminiHochberg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LearnerArg {
    Ols,
    Logistic,
}

impl From<LearnerArg> for LearnerKind {
    fn from(l: LearnerArg) -> Self {
        match l {
            LearnerArg::Ols => LearnerKind::OlsRSquared,
            LearnerArg::Logistic => LearnerKind::LogisticAuc,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every available core.
    #[arg(long, env = "HARVEST_WORKERS")]
    pub workers: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Features per subset.
    #[arg(long)]
    pub k: Option<usize>,
    /// Subsets per round.
    #[arg(long, conflicts_with = "coverage")]
    pub n_subsets: Option<usize>,
    /// Expected number of subsets containing each feature; sets the subset count.
    #[arg(long)]
    pub coverage: Option<f64>,
    #[arg(long, value_enum)]
    pub adjust: Option<AdjustArg>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long, value_enum)]
    pub learner: Option<LearnerArg>,
    /// Earlier report to compare this run against.
    #[arg(long)]
    pub compare: Option<PathBuf>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            output: self.output.clone(),
            seed: self.seed,
            workers: self.workers,
            alpha: self.alpha,
            subset_size: self.k,
            n_subsets: self.n_subsets,
            target_coverage: self.coverage,
            adjustment: self.adjust.map(Into::into),
            rounds: self.rounds,
            learner: self.learner.map(Into::into),
            ..Overrides::default()
        }
    }

    fn merged(&self, extra: Overrides) -> Result<Merged, Failure> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p).map_err(Failure::config)?,
            None => ConfigFile::default(),
        };
        let mut o = self.overrides();
        o.input = extra.input;
        o.outcome = extra.outcome;
        o.split_fraction = extra.split_fraction;
        o.replications = extra.replications;
        Ok(Merged::new(file, &o))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScreenArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Input CSV file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Outcome column name or 0-based index.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Screen a random training fraction and score the rest.
    #[arg(long)]
    pub split: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Table {
    /// 50 observations per replication.
    Table1,
    /// 100 observations per replication.
    Table2,
}

impl Table {
    fn n_obs(self) -> usize {
        match self {
            Table::Table1 => 50,
            Table::Table2 => 100,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Table::Table1 => "table1",
            Table::Table2 => "table2",
        }
    }

    fn published(self) -> &'static [simulate::PublishedRow; 7] {
        match self {
            Table::Table1 => &simulate::TABLE1,
            Table::Table2 => &simulate::TABLE2,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub table: Table,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = harvest::DEFAULT_COVERAGE)]
    pub coverage: f64,
}

/// A failed command: exit code and message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(e: impl ToString) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }

    fn data(e: impl ToString) -> Self {
        Self {
            code: 2,
            message: e.to_string(),
        }
    }

    fn runtime(e: impl ToString) -> Self {
        Self {
            code: 3,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e)
    }
}

fn harvest_failure(e: HarvestError) -> Failure {
    match e {
        HarvestError::Config(_) | HarvestError::PoolTooSmall { .. } | HarvestError::Sampler(_) => {
            Failure::config(e)
        }
        HarvestError::Learner(
            LearnerError::DegenerateOutcome
            | LearnerError::SingleClass
            | LearnerError::OutcomeMismatch { .. },
        ) => Failure::data(e),
        _ => Failure::runtime(e),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Screen(a) => cmd_screen(&a),
        Command::Reproduce(a) => cmd_reproduce(&a),
        Command::Plan(a) => cmd_plan(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn with_workers<T>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T, Failure>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(Failure::runtime)?;
    Ok(pool.install(job))
}

fn compare_with(path: &std::path::Path, current: &AnyReport) -> Result<(), Failure> {
    let earlier = report::load(path).map_err(Failure::data)?;
    let diffs = report::differences(&earlier, current);
    if diffs.is_empty() {
        println!("identical to {}", path.display());
    } else {
        println!("differs from {}:", path.display());
        for d in diffs {
            println!("  {d}");
        }
    }
    Ok(())
}

pub fn cmd_screen(args: &ScreenArgs) -> Result<(), Failure> {
    let extra = Overrides {
        input: args.input.clone(),
        outcome: args.outcome.as_deref().map(|s| s.parse().expect("infallible")),
        split_fraction: args.split,
        ..Overrides::default()
    };
    let merged = args.common.merged(extra)?;
    let run = ScreenConfig::resolve(&merged)?;
    let kind = run.harvest.learner.kind.outcome_kind();
    let full = dataset::load_csv(&run.input, &run.outcome, kind).map_err(Failure::data)?;

    let split = match run.split_fraction {
        Some(f) => Some(
            dataset::split(&full, f, derive_seed(run.harvest.seed, SPLIT_TAG, 0))
                .map_err(Failure::data)?,
        ),
        None => None,
    };
    let screened: &Dataset = split.as_ref().map_or(&full, |s| &s.train);

    let started = Instant::now();
    let result = with_workers(run.workers, || harvest::run(screened, &run.harvest))?
        .map_err(harvest_failure)?;
    let elapsed = started.elapsed();

    let holdout = match &split {
        Some(s) => Some(holdout_report(s, &result, &run)?),
        None => None,
    };

    print_screen(&full, &run, &result, holdout.as_ref(), elapsed);

    let report = ScreenReport {
        version: report::VERSION.to_string(),
        config: run.clone(),
        dataset: DatasetInfo {
            n_rows: full.n_rows(),
            n_features: full.n_features(),
            outcome_kind: full.outcome_kind(),
        },
        result,
        holdout,
    };
    report::write_json(&report, &run.output).map_err(Failure::runtime)?;
    println!("report written to {}", run.output.display());
    if let Some(p) = &args.common.compare {
        compare_with(p, &AnyReport::Screen(report))?;
    }
    Ok(())
}

fn holdout_report(
    s: &dataset::SplitPair,
    result: &HarvestReport,
    run: &ScreenConfig,
) -> Result<HoldoutReport, Failure> {
    let features: Vec<usize> = result.final_features.iter().map(|f| f.index).collect();
    let (train_accuracy, holdout_accuracy) = match FeatureSubset::new(features.clone()) {
        Some(subset) if !subset.is_empty() => {
            match learners::holdout_accuracy(&s.train, &s.holdout, &subset, &run.harvest.learner) {
                Ok((fit, score)) => (Some(fit.accuracy), score),
                Err(_) => (None, None),
            }
        }
        _ => (None, None),
    };
    Ok(HoldoutReport {
        fraction: s.fraction,
        train_rows: s.train.n_rows(),
        holdout_rows: s.holdout.n_rows(),
        features,
        train_accuracy,
        holdout_accuracy,
    })
}

fn print_screen(
    full: &Dataset,
    run: &ScreenConfig,
    result: &HarvestReport,
    holdout: Option<&HoldoutReport>,
    elapsed: std::time::Duration,
) {
    let h = &run.harvest;
    println!(
        "{}: {} rows, {} features; learner {}, alpha {}, adjustment {}",
        run.input.display(),
        full.n_rows(),
        full.n_features(),
        h.learner.kind,
        h.alpha,
        h.adjustment
    );
    for round in &result.rounds {
        println!();
        println!(
            "round {}: {} candidates, k={}, n={}, {} selected ({} failed fits, {} unconverged, {:.2}s)",
            round.round_index + 1,
            round.candidate_features.len(),
            round.subset_size,
            round.n_subsets,
            round.survivors.len(),
            round.failed_fits,
            round.unconverged_fits,
            round.wall_time.as_secs_f64()
        );
        print!("{}", report::survivor_table(round, full.feature_names()));
    }
    println!();
    let names: Vec<&str> = result.final_features.iter().map(|f| f.name.as_str()).collect();
    println!(
        "stopped ({}); {} features kept: {}",
        result.stop_reason,
        names.len(),
        names.join(", ")
    );
    if let Some(ho) = holdout {
        let show = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        println!(
            "holdout ({} train / {} holdout rows): train {} {}, holdout {}",
            ho.train_rows,
            ho.holdout_rows,
            h.learner.kind,
            show(ho.train_accuracy),
            show(ho.holdout_accuracy)
        );
    }
    println!("elapsed {:.2}s", elapsed.as_secs_f64());
}

/// Study settings for a table with config-file values and flags applied.
pub fn study_spec(table: Table, merged: &Merged) -> Result<SimSpec, Failure> {
    let f = &merged.file;
    if f.input.is_some() || f.outcome.is_some() || f.split_fraction.is_some() {
        return Err(Failure::config(
            "input: data settings do not apply to the simulation study",
        ));
    }
    let seed = f.seed.unwrap_or(DEFAULT_STUDY_SEED);
    let mut spec = SimSpec::reference(table.n_obs(), seed);
    let mut with_seed = merged.clone();
    with_seed.file.seed = Some(seed);
    spec.harvest = with_seed.harvest_config(spec.harvest.clone())?;
    if let Some(r) = f.replications {
        if r == 0 {
            return Err(Failure::config("replications: must be positive"));
        }
        spec.replications = r;
    }
    if spec.harvest.subset_size > spec.p {
        return Err(Failure::config(format!(
            "k: subset size {} exceeds the {} features of the study",
            spec.harvest.subset_size, spec.p
        )));
    }
    Ok(spec)
}

pub fn cmd_reproduce(args: &ReproduceArgs) -> Result<(), Failure> {
    let merged = args.common.merged(Overrides {
        replications: args.replications,
        ..Overrides::default()
    })?;
    let spec = study_spec(args.table, &merged)?;
    let output = merged
        .file
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("reproduce-{}.json", args.table.name())));
    config::check_output_dir(&output)?;
    let workers = merged.file.workers.unwrap_or(0);

    let started = Instant::now();
    let summary = with_workers(workers, || simulate::run_study(&spec))?.map_err(|e| match e {
        SimError::Spec(_) => Failure::config(e),
        SimError::Harvest { .. } => Failure::runtime(e),
    })?;
    let published = simulate::published_screening_row(args.table.published());
    let comparison = Comparison::new(&summary, &published);
    let reduced = spec.replications < FULL_REPLICATIONS;

    let h = &spec.harvest;
    println!(
        "{}: {} observations, {} replications{}; learner {}, alpha {}, adjustment {}, k={}, {}, seed {}",
        args.table.name(),
        spec.n_obs,
        spec.replications,
        if reduced { " (reduced run)" } else { "" },
        h.learner.kind,
        h.alpha,
        h.adjustment,
        h.subset_size,
        match (h.n_subsets, h.target_coverage) {
            (Some(n), _) => format!("n={n}"),
            (None, Some(c)) => format!("coverage {c}"),
            _ => String::new(),
        },
        spec.seed
    );
    println!();
    print!("{}", report::comparison_table(&comparison));
    println!();
    println!("published rows for the other methods (sensitivity | specificity, min/median/max):");
    for row in args.table.published().iter().take(6) {
        let [a, b, c] = row.sensitivity;
        let [d, e, f] = row.specificity;
        println!("  {:<16}{a:>5}{b:>5}{c:>5}  |{d:>5}{e:>5}{f:>5}", row.method);
    }
    println!();
    println!(
        "selection counts: {:?}",
        summary.per_feature_selection_counts
    );
    eprintln!("elapsed {:.1}s", started.elapsed().as_secs_f64());

    let report = ReproduceReport {
        version: report::VERSION.to_string(),
        table: args.table.name().to_string(),
        reduced,
        spec,
        summary,
        comparison,
    };
    report::write_json(&report, &output).map_err(Failure::runtime)?;
    println!("report written to {}", output.display());
    if let Some(p) = &args.common.compare {
        compare_with(p, &AnyReport::Reproduce(report))?;
    }
    Ok(())
}

/// Formats without trailing zeros: 10 rather than 10.000000.
fn trim_float(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

pub fn cmd_plan(args: &PlanArgs) -> Result<(), Failure> {
    let n = sampler::plan_n_for_coverage(args.p, args.k, args.coverage).map_err(Failure::config)?;
    let coverage = sampler::expected_coverage(n, args.k, args.p);
    println!("n = {n}");
    println!("coverage = {}", trim_float(coverage));
    println!("sd = {}", trim_float(coverage.sqrt()));
    Ok(())
}
