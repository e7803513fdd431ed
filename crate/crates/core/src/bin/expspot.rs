fn main() {
    std::process::exit(expspot::cli::run(std::env::args_os()));
}
