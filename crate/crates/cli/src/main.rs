use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(skumap_cli::run(std::env::args_os()))
}
