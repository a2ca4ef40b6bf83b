fn main() {
    std::process::exit(demsim::run(std::env::args_os()));
}
