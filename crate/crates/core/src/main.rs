fn main() {
    std::process::exit(signaltwin::cli::run_cli(std::env::args_os()));
}
