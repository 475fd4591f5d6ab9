fn main() {
    std::process::exit(htlab::cli::run(std::env::args_os()));
}
