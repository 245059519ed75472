fn main() {
    std::process::exit(comask_cli::run(std::env::args_os()));
}
