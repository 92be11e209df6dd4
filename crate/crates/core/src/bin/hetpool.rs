fn main() {
    std::process::exit(hetpool::cli::run(std::env::args_os()));
}
