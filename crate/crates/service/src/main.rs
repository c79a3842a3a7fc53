use std::net::SocketAddr;

use clap::Parser;
use tokio::net::TcpListener;

use bilayer_service::{serve, AppState};

#[derive(Parser)]
#[command(name = "bilayer-service", version, about = "Bilayer plate simulation service")]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8070", env = "BILAYER_ADDR")]
    addr: SocketAddr,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let listener = TcpListener::bind(args.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    tokio::select! {
        r = serve(listener, AppState::default()) => r,
        _ = tokio::signal::ctrl_c() => {
            log::info!("shutting down");
            Ok(())
        }
    }
}
