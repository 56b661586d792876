use clap::Parser;

use ringchain_cli::{execute, Cli};

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let code = match execute(&cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock()) {
        Ok(code) => code,
        // reader went away, e.g. piped into `head`
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|e| e.kind() == std::io::ErrorKind::BrokenPipe) => 0,
        Err(e) => return Err(e),
    };
    std::process::exit(code);
}
