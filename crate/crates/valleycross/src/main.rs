fn main() {
    std::process::exit(valleycross::cli::run(std::env::args()));
}
