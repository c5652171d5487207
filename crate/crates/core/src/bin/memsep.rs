fn main() {
    std::process::exit(memsep::cli::run_cli(std::env::args_os()));
}
