fn main() -> std::process::ExitCode {
    reauthor_service::cli::main()
}
