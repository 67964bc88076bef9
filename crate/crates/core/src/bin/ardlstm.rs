use clap::Parser;

use ardlstm::cli::{render_error, run, Cli};

fn main() {
    let cli = Cli::parse();
    let env_seed = std::env::var("ARDLSTM_SEED").ok();
    if let Err(e) = run(&cli, env_seed.as_deref()) {
        eprintln!("{}", render_error(&e));
        std::process::exit(1);
    }
}
