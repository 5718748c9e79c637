fn main() {
    std::process::exit(steinpp::cli::main_with(std::env::args_os()));
}
