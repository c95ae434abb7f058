fn main() {
    std::process::exit(phonemekit::cli::run(std::env::args().collect()));
}
