fn main() {
    std::process::exit(viewstream::cli::run(std::env::args_os()));
}
