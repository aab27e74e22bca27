fn main() {
    std::process::exit(ghostgame::cli::run_from_env());
}
