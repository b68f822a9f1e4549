fn main() {
    std::process::exit(frog_model::cli::main_from(std::env::args_os()));
}
