fn main() {
    std::process::exit(gpgibbs::cli::run(std::env::args().collect()));
}
