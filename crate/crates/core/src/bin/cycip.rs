fn main() {
    std::process::exit(cycip::cli::run(std::env::args_os()));
}
