fn main() {
    std::process::exit(cmla::cli::run(std::env::args_os()));
}
