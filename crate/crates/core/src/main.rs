fn main() {
    std::process::exit(ppapep::cli::main_with_args(std::env::args_os()));
}
