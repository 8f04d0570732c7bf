fn main() {
    std::process::exit(harvest::cli::run(std::env::args_os()));
}
