fn main() {
    std::process::exit(cecrf::cli::run(std::env::args_os()));
}
