use clap::Parser;
use rindler_rates::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RINDLER_RATES_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("rindler-rates: {e}");
        std::process::exit(e.exit_code());
    }
}
