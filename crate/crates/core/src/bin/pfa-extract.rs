fn main() {
    std::process::exit(pfa_extract::cli::run(std::env::args_os().skip(1)));
}
