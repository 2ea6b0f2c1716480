fn main() {
    std::process::exit(dtrsurv::cli::run(std::env::args_os()));
}
