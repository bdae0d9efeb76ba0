fn main() {
    std::process::exit(ssepwalk_cli::run(std::env::args_os().collect()));
}
