fn main() {
    std::process::exit(qot::cli::main_with_args(std::env::args_os()));
}
