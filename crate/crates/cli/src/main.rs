fn main() {
    std::process::exit(toxnet_cli::run(std::env::args_os()));
}
