fn main() {
    std::process::exit(mixshift::cli::run(std::env::args_os()));
}
