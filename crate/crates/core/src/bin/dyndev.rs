fn main() {
    std::process::exit(dyndev::cli::run(std::env::args_os()));
}
