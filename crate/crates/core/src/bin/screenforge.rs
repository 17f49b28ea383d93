fn main() {
    std::process::exit(screenforge::cli::run(std::env::args_os()));
}
