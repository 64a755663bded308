fn main() {
    std::process::exit(mpbs::cli::run(std::env::args().collect()));
}
