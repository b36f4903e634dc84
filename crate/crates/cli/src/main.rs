fn main() {
    std::process::exit(mreach_cli::main_with_args(std::env::args_os()));
}
