//! Serve the JSON API on localhost:8080 with an in-memory engine.
//!
//! cargo run --example http_service
//! curl -s localhost:8080/api/v1/state/revision

use visitplan::config::EngineConfig;
use visitplan::engine::Engine;

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let engine = Engine::in_memory(EngineConfig::default());
    let addr = "127.0.0.1:8080".parse().unwrap();
    println!("listening on http://{addr}/api/v1");
    visitplan::service::serve(engine, addr, None).await
}
