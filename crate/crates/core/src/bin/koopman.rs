fn main() {
    std::process::exit(deep_koopman::cli::run(std::env::args_os()));
}
