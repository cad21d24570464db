fn main() {
    std::process::exit(mmscreen::cli::run(std::env::args_os()));
}
