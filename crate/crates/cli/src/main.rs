fn main() {
    std::process::exit(fdmodels_cli::main_with(std::env::args_os()));
}
