fn main() {
    std::process::exit(survmoe::cli::run(std::env::args_os()));
}
