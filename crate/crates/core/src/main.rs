fn main() {
    std::process::exit(annpricer::cli::run(std::env::args_os()));
}
