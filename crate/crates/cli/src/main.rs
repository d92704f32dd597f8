fn main() {
    std::process::exit(rdcontract_cli::run(std::env::args_os()));
}
