fn main() {
    std::process::exit(qbsde::cli::main_with_args(std::env::args_os()));
}
