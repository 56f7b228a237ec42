fn main() {
    std::process::exit(cavq::cli::main_from(std::env::args_os()));
}
