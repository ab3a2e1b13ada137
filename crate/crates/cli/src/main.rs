fn main() {
    std::process::exit(dpa_cli::run(std::env::args_os()));
}
