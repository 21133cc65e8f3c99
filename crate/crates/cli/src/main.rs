fn main() {
    std::process::exit(cbd_cli::run(std::env::args_os()));
}
