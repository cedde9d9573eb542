fn main() -> std::process::ExitCode {
    bolimes::cli::main()
}
