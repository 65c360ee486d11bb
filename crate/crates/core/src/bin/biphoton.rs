fn main() {
    std::process::exit(biphoton::cli::run(std::env::args_os()));
}
