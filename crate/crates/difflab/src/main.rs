fn main() {
    std::process::exit(difflab::main_with_args(std::env::args_os()));
}
