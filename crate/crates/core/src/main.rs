fn main() -> std::process::ExitCode {
    topicforge::cli::main_exit()
}
