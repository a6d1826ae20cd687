fn main() {
    std::process::exit(tnu::cli::run(std::env::args_os()));
}
