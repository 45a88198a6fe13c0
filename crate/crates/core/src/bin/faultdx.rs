fn main() {
    std::process::exit(faultdx::harness::cli_main(std::env::args_os()));
}
