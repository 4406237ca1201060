fn main() {
    std::process::exit(elang::cli::main_with_args(std::env::args_os()));
}
