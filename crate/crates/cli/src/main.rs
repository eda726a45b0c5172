fn main() {
    std::process::exit(idsr_cli::main_with_args(std::env::args_os()));
}
