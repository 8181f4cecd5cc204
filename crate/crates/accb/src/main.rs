fn main() {
    std::process::exit(accb::driver::run_cli(std::env::args_os()));
}
