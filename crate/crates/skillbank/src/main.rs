fn main() {
    std::process::exit(skillbank::cli::main_with_args(std::env::args_os()));
}
