fn main() {
    std::process::exit(tempered::cli::run_from(std::env::args_os()));
}
