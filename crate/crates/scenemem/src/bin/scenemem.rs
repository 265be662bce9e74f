fn main() {
    std::process::exit(scenemem::cli::main_with_args(std::env::args_os()));
}
