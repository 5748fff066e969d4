fn main() {
    std::process::exit(wlecv_cli::run_cli(std::env::args_os()));
}
