fn main() -> std::process::ExitCode {
    eigprox::cli::main()
}
