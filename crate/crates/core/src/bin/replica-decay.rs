fn main() {
    std::process::exit(replica_decay::cli::main_from_env());
}
