fn main() {
    std::process::exit(spacetime_dwr::cli::main_with_args(std::env::args_os()));
}
