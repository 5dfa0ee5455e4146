fn main() {
    std::process::exit(qdensity_cli::run(std::env::args_os()));
}
