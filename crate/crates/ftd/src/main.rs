fn main() {
    std::process::exit(ftd::cli::main_with(std::env::args_os()));
}
