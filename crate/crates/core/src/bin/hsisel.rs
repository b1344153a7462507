fn main() {
    std::process::exit(hsisel::cli::run(std::env::args_os()));
}
