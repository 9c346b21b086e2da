fn main() {
    std::process::exit(tvoc::cli::main_with_args(std::env::args_os()));
}
