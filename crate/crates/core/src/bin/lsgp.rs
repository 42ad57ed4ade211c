fn main() -> std::process::ExitCode {
    lsgp::cli::main()
}
