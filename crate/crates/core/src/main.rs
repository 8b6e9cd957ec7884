fn main() {
    std::process::exit(maxdater::cli::run(std::env::args_os()));
}
