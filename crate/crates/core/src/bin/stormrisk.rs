fn main() {
    std::process::exit(stormrisk::cli::run(std::env::args_os()));
}
