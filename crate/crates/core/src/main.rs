fn main() {
    std::process::exit(gaitroc::cli::run(std::env::args_os()));
}
