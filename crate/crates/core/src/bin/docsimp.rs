fn main() {
    std::process::exit(docsimp::cli::main_with(std::env::args_os()));
}
