fn main() {
    std::process::exit(lipmbrl::cli::run(std::env::args_os()));
}
