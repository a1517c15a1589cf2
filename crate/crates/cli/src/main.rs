fn main() -> std::process::ExitCode {
    adsplice_cli::main_with(std::env::args_os())
}
