fn main() {
    std::process::exit(curlvar_cli::main_with(std::env::args_os()));
}
