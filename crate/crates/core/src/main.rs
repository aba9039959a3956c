use clap::Parser;
use openxxz::cli::{emit_error, init_threads, resolve_config, run, Cli};
use std::path::PathBuf;

fn main() {
    let cli = Cli::parse();
    let status = match init_threads().and_then(|_| run(&cli)) {
        Ok(s) => s,
        Err(e) => {
            let dir = resolve_config(&cli)
                .map(|c| PathBuf::from(c.output.dir))
                .unwrap_or_else(|_| PathBuf::from("."));
            match emit_error(&dir, &e) {
                Ok(text) => eprintln!("{text}"),
                Err(_) => eprintln!("{}", serde_json::to_string(&e.record()).unwrap_or_default()),
            }
            e.code()
        }
    };
    std::process::exit(status);
}
