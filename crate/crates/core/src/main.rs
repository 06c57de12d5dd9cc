fn main() {
    std::process::exit(mscanet::cli::run(std::env::args_os()));
}
