//! Ad-insertion edge server: the REST job API and WebSocket packet delivery.
//!
//! ```no_run
//! # async fn demo() -> std::io::Result<()> {
//! let server = adsplice_server::start(adsplice_server::ServerConfig::from_env()).await?;
//! println!("rest on {}, ws on {}", server.rest_addr, server.ws_addr);
//! server.shutdown();
//! # Ok(())
//! # }
//! ```

pub mod delivery;
pub mod error;
pub mod jobs;
pub mod packets;
pub mod probe;
pub mod rest;
pub mod specs;
pub mod worker;

use std::net::{Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use delivery::DeliveryConfig;
pub use error::ApiError;
pub use jobs::{Job, JobMode, JobRequest, JobStatus};
pub use specs::ServerSpecs;

pub const ENV_DATA_ROOT: &str = "ADSPLICE_DATA_ROOT";
pub const ENV_PORT: &str = "ADSPLICE_PORT";
pub const ENV_WS_PORT: &str = "ADSPLICE_WS_PORT";
pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_WS_PORT: u16 = 8081;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub data_root: PathBuf,
    pub rest_addr: SocketAddr,
    pub ws_addr: SocketAddr,
    /// Host name placed in the `ws_url` handed to clients.
    pub public_host: String,
    pub delivery: DeliveryConfig,
}

impl ServerConfig {
    pub fn new(data_root: impl Into<PathBuf>, port: u16, ws_port: u16) -> Self {
        ServerConfig {
            data_root: data_root.into(),
            rest_addr: (Ipv4Addr::UNSPECIFIED, port).into(),
            ws_addr: (Ipv4Addr::UNSPECIFIED, ws_port).into(),
            public_host: "127.0.0.1".into(),
            delivery: DeliveryConfig::default(),
        }
    }

    /// Loopback on ephemeral ports.
    pub fn ephemeral(data_root: impl Into<PathBuf>) -> Self {
        ServerConfig {
            rest_addr: (Ipv4Addr::LOCALHOST, 0).into(),
            ws_addr: (Ipv4Addr::LOCALHOST, 0).into(),
            ..ServerConfig::new(data_root, 0, 0)
        }
    }

    pub fn from_env() -> Self {
        let port = |k: &str, d: u16| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
        let root = std::env::var_os(ENV_DATA_ROOT).map_or_else(|| PathBuf::from("adsplice-data"), PathBuf::from);
        ServerConfig::new(root, port(ENV_PORT, DEFAULT_PORT), port(ENV_WS_PORT, DEFAULT_WS_PORT))
    }
}

pub struct RunningServer {
    pub rest_addr: SocketAddr,
    pub ws_addr: SocketAddr,
    pub ws_url: String,
    public_host: String,
    tasks: Vec<JoinHandle<()>>,
}

impl RunningServer {
    pub fn rest_url(&self) -> String {
        format!("http://{}:{}", self.public_host, self.rest_addr.port())
    }

    /// Stops accepting connections. Open sessions and workers run on.
    pub fn shutdown(self) {
        for t in &self.tasks {
            t.abort();
        }
    }

    /// Runs until either listener fails.
    pub async fn wait(mut self) {
        if let Some(t) = self.tasks.pop() {
            let _ = t.await;
        }
    }
}

/// Loads persisted jobs, binds both listeners and starts serving.
pub async fn start(config: ServerConfig) -> std::io::Result<RunningServer> {
    let root = config.data_root.clone();
    let store = tokio::task::spawn_blocking(move || {
        let store = jobs::JobStore::open(&root, ServerSpecs::detect())?;
        for e in store.all() {
            worker::restore(&e);
        }
        Ok::<_, std::io::Error>(store)
    })
    .await
    .map_err(std::io::Error::other)??;
    let store = Arc::new(store);

    let rest = TcpListener::bind(config.rest_addr).await?;
    let ws = TcpListener::bind(config.ws_addr).await?;
    let rest_addr = rest.local_addr()?;
    let ws_addr = ws.local_addr()?;
    let ws_url = format!("ws://{}:{}/stream", config.public_host, ws_addr.port());

    let api = rest::router(rest::RestState {
        store: store.clone(),
        ws_url: ws_url.clone(),
    });
    let stream = delivery::router(store, config.delivery);
    let tasks = vec![
        tokio::spawn(async move {
            if let Err(e) = axum::serve(rest, api).await {
                tracing::error!("REST listener stopped: {e}");
            }
        }),
        tokio::spawn(async move {
            if let Err(e) = axum::serve(ws, stream).await {
                tracing::error!("WebSocket listener stopped: {e}");
            }
        }),
    ];
    tracing::info!(%rest_addr, %ws_addr, "serving");
    Ok(RunningServer {
        rest_addr,
        ws_addr,
        ws_url,
        public_host: config.public_host,
        tasks,
    })
}
