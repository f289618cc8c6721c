fn main() -> std::process::ExitCode {
    dpln::cli::main()
}
