fn main() {
    std::process::exit(prefalign::cli::main_with_args(std::env::args_os()));
}
