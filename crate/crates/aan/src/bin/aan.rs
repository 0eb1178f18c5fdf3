fn main() {
    std::process::exit(aan::cli::run(std::env::args_os()));
}
