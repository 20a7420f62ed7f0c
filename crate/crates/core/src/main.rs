fn main() {
    std::process::exit(forge::cli::run(std::env::args_os()));
}
