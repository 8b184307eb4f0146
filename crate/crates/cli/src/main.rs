fn main() {
    std::process::exit(ferrosim_cli::main_with(std::env::args_os()));
}
