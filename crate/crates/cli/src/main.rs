fn main() {
    std::process::exit(svlens_cli::run(std::env::args_os()));
}
