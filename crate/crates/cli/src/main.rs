fn main() {
    std::process::exit(qpainleve_cli::run_command(std::env::args_os()));
}
