fn main() {
    std::process::exit(cvcluster::cli::main_with_args(std::env::args_os()));
}
