fn main() {
    std::process::exit(panelbounds_cli::run(std::env::args_os()));
}
