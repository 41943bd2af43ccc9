fn main() {
    std::process::exit(fracpoinc::cli::run(std::env::args().collect()));
}
