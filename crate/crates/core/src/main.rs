fn main() -> std::process::ExitCode {
    autophagy::cli::main()
}
