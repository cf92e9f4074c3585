fn main() {
    std::process::exit(qoc_core::cli::main_with_args(std::env::args_os()));
}
