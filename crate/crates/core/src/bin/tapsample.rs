fn main() {
    std::process::exit(tapsample::cli::run(std::env::args_os()));
}
