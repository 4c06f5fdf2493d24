fn main() {
    std::process::exit(qgesture::cli::run(std::env::args_os()));
}
