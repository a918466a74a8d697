fn main() {
    std::process::exit(causal_tree::cli::main_with_args(std::env::args_os()));
}
