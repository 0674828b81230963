fn main() {
    std::process::exit(dampwave_cli::main_with(std::env::args_os()));
}
