fn main() {
    std::process::exit(periocular_cli::app::main_with(std::env::args_os()));
}
