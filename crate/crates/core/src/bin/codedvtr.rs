fn main() {
    std::process::exit(codedvtr::cli::run_from(std::env::args_os()));
}
