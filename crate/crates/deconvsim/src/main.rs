fn main() {
    std::process::exit(deconvsim::cli::run(std::env::args_os()));
}
