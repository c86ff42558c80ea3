fn main() {
    let code = shellvi::cli::run(std::env::args());
    std::process::exit(code);
}
