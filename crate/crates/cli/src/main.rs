fn main() {
    std::process::exit(txcache_cli::run(std::env::args_os()));
}
