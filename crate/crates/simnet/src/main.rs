fn main() {
    std::process::exit(simnet::cli::run(std::env::args_os()));
}
