fn main() {
    std::process::exit(conehull::cli::run(std::env::args_os()));
}
