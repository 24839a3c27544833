fn main() {
    std::process::exit(bnncert_cli::run(std::env::args_os()));
}
