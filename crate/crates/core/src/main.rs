fn main() {
    std::process::exit(detlab::cli::run_from_args(std::env::args_os()));
}
