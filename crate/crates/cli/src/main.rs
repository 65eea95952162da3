fn main() {
    std::process::exit(capsight_cli::main_with_args(std::env::args_os()));
}
