fn main() {
    std::process::exit(fnn_cli::main_with_args(std::env::args_os()));
}
