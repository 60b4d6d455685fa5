fn main() {
    std::process::exit(proxcerf_cli::main_with(std::env::args_os()));
}
