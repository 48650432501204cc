fn main() {
    std::process::exit(entrance_core::cli::main_with(std::env::args_os()));
}
