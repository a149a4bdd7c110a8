fn main() {
    std::process::exit(lowfr_cli::run(std::env::args_os()));
}
