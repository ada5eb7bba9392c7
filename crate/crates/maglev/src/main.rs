fn main() {
    std::process::exit(maglev::cli::run(std::env::args()));
}
