use std::process::ExitCode;

fn main() -> ExitCode {
    tobit_select::cli::main_entry()
}
