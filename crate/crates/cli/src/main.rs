fn main() {
    std::process::exit(cqed_cli::app::main_with_args(std::env::args_os()));
}
