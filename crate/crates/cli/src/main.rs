use clap::Parser;
use neuralparc_cli::commands::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let result = neuralparc_cli::init_threads().and_then(|()| run(cli));
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(neuralparc_cli::exit_code(&e));
    }
}
