fn main() {
    std::process::exit(scpc::cli::run(std::env::args_os()));
}
