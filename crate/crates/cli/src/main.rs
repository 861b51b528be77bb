fn main() {
    std::process::exit(autofeedback_cli::run(std::env::args_os()));
}
