//! Parse roster CSVs, drive the engine through a few mutations and reopen it
//! from its snapshot directory.
//!
//! cargo run --example ingest_snapshot

use visitplan::config::EngineConfig;
use visitplan::engine::{Engine, Mutation, OptimizerChoice};
use visitplan::store::parse_roster_files;

const CLIENTS: &str = "\
client_id,name,country,city,rank,teu
acme,Acme Shipping,BR,Santos,1,620000
bolt,Bolt Lines,BR,Santos,2,120000
delta,Delta Freight,BR,Manaus,,510000
esker,Esker,BR,Manaus,9,40000
";

const TERMINALS: &str = "\
terminal_id,name,owner_client_id,city,country,teu
t1,Quay One,acme,Santos,BR,200000
";

fn main() {
    let parsed = parse_roster_files(CLIENTS.as_bytes(), TERMINALS.as_bytes()).unwrap();
    for e in &parsed.report {
        println!("skipped {} line {}: {} ({})", e.file, e.row, e.field, e.message);
    }

    let dir = std::env::temp_dir().join(format!("visitplan-example-{}", std::process::id()));
    let mut engine = Engine::open(&dir, EngineConfig::default()).unwrap();
    engine.apply(Mutation::Ingest { clients: parsed.clients, terminals: parsed.terminals }).unwrap();
    engine.apply(Mutation::CalculateRank { client_id: "delta".into() }).unwrap();
    engine.apply(Mutation::GenerateSchedule { optimizer: OptimizerChoice::Greedy, seed: 0 }).unwrap();
    println!("revision {} saved under {}", engine.state().revision, dir.display());

    let reopened = Engine::open(&dir, EngineConfig::default()).unwrap();
    println!("reopened at revision {}, identical: {}", reopened.state().revision, reopened.state() == engine.state());
    std::fs::remove_dir_all(&dir).ok();
}
