fn main() {
    std::process::exit(codemin::cli::main_from_args(std::env::args_os()));
}
