fn main() {
    std::process::exit(bsq_cli::run_cli(std::env::args_os()));
}
