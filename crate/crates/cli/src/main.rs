fn main() {
    std::process::exit(pathwit_cli::run(std::env::args().collect()));
}
