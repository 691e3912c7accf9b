use std::process::ExitCode;

use clap::Parser;
use demon_cli::{execute, load_manifest, Cli, Outcome};

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let manifest = match load_manifest(cli.manifest.as_deref(), cli.seed) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match execute(cli.command, &manifest, &cli.out) {
        Ok((Outcome::Ok, files)) => {
            eprintln!("wrote {} files to {}", files.len(), cli.out.display());
            ExitCode::SUCCESS
        }
        Ok((Outcome::ChecksFailed, _)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
