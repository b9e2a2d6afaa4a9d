fn main() {
    std::process::exit(paeb_core::cli::run(std::env::args_os()));
}
