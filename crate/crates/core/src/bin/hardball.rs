fn main() {
    std::process::exit(hardball::cli::main_from(std::env::args_os()));
}
