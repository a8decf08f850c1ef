fn main() {
    std::process::exit(d4::cli::run(std::env::args_os()));
}
