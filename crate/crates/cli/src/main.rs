fn main() {
    std::process::exit(clocksync_cli::run(std::env::args_os()));
}
