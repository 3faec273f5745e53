fn main() {
    std::process::exit(curvefilt::cli::run(std::env::args_os()));
}
