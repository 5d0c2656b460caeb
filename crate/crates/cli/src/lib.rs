//! Command implementations and HTTP services behind the `ruleflex` binary.

pub mod commands;
mod error;
pub mod review;
pub mod serve;

pub use error::{ApiError, CliError};

use std::net::SocketAddr;

use axum::Router;

/// Serves `app` until ctrl-c.
pub async fn run_server(app: Router, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
