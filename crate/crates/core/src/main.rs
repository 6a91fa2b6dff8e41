fn main() {
    std::process::exit(membrane_core::cli::run(std::env::args_os()));
}
