fn main() -> std::process::ExitCode {
    repcount::cli::main()
}
