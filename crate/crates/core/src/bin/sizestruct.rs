fn main() {
    std::process::exit(sizestruct::cli::run(std::env::args_os()));
}
