use clap::Parser;
use extreme_bma_cli::error::ErrorRecord;
use extreme_bma_cli::{run, Cli};

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let record = ErrorRecord { kind: "usage", message: e.to_string().trim().to_string(), exit_code: 1 };
            eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
            std::process::exit(1);
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            let record = e.record();
            eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
            std::process::exit(record.exit_code);
        }
    }
}
