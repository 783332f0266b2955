fn main() {
    std::process::exit(ca_alloc::cli::main_with(std::env::args_os()));
}
