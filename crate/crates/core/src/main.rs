fn main() {
    std::process::exit(spinlab::cli::run(std::env::args_os()));
}
