fn main() {
    std::process::exit(idla_cli::run_cli(std::env::args_os()));
}
