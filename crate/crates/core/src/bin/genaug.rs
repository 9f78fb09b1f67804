fn main() {
    std::process::exit(genaug::cli::main_with_args(std::env::args_os()));
}
