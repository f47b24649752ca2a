fn main() {
    std::process::exit(posecpr_cli::run(std::env::args_os()));
}
