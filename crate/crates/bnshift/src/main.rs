fn main() {
    std::process::exit(bnshift::cli::run(std::env::args_os()));
}
