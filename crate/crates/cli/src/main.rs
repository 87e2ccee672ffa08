fn main() {
    std::process::exit(coxperc_cli::run(std::env::args_os()));
}
