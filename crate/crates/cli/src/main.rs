fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(cape_cli::run(std::env::args_os()))
}
