fn main() {
    std::process::exit(ruinopt::cli::main_with_args(std::env::args_os()));
}
