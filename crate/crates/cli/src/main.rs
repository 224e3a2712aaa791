fn main() {
    std::process::exit(qfock_cli::run(std::env::args_os()));
}
