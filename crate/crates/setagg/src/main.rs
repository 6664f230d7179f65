fn main() {
    std::process::exit(setagg::cli::run(std::env::args_os()));
}
