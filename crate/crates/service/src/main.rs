use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use signalgame_service::{serve, AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "signalgame-server", about = "Experiment and simulation service")]
struct Args {
    /// TOML configuration file; SIGNALGAME_* variables override it.
    #[arg(long, env = "SIGNALGAME_CONFIG")]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let config = ServiceConfig::load(args.config.as_deref())?;
    let app = Arc::new(AppState::build(config).await?);
    serve(app).await?;
    Ok(())
}
