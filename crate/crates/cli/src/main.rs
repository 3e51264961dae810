fn main() {
    std::process::exit(sqm_cli::main_with_args(std::env::args_os()));
}
