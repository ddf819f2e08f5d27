fn main() {
    std::process::exit(callscale::cli::main_with_args(std::env::args_os()));
}
