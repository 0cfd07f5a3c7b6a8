fn main() {
    std::process::exit(synthkit::cli::main_with_args(std::env::args_os()));
}
