use clap::Parser;

fn main() -> std::process::ExitCode {
    match reconsal_cli::run(reconsal_cli::Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::ExitCode::FAILURE
        }
    }
}
