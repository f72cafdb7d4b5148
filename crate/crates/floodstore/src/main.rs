fn main() {
    std::process::exit(floodstore::harness::cli_main(std::env::args_os()));
}
