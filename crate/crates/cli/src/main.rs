fn main() {
    std::process::exit(cutofflab_cli::main_with_args(std::env::args_os()));
}
