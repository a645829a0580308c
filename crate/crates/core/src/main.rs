fn main() {
    std::process::exit(mcmplan::cli::run(std::env::args_os()));
}
