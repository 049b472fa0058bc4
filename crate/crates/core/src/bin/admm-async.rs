fn main() {
    std::process::exit(admm_async::cli::main());
}
