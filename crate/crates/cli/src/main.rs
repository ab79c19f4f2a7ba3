fn main() {
    std::process::exit(spade_cli::main_with_args(std::env::args_os()));
}
