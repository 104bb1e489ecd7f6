fn main() {
    std::process::exit(overhauser::cli::main_with_args(std::env::args_os()));
}
