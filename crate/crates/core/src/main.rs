fn main() {
    std::process::exit(metareg::cli::main_with_args(std::env::args_os()));
}
