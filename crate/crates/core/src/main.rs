fn main() {
    std::process::exit(navbot::harness::cli::cli_main(std::env::args_os()));
}
