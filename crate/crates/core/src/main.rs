fn main() {
    std::process::exit(gsvd_wiretap::cli::run(std::env::args_os()));
}
