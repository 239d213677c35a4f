fn main() {
    std::process::exit(sympose::cli::run(std::env::args_os()));
}
