use std::process::ExitCode;

fn main() -> ExitCode {
    fmcodec::cli::main()
}
