fn main() {
    std::process::exit(bbis_cli::run(std::env::args_os()));
}
