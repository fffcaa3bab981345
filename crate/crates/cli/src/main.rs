fn main() {
    std::process::exit(logcon_cli::main_with_args(std::env::args_os()));
}
