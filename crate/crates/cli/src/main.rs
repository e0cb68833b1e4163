fn main() {
    std::process::exit(peer_ar_cli::run_cli(std::env::args_os()));
}
