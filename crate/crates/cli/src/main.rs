fn main() {
    std::process::exit(asdiloc_cli::main_with(std::env::args_os()));
}
