fn main() {
    std::process::exit(ambc::cli::run(std::env::args_os()));
}
