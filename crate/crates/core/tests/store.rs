use tempfile::TempDir;

use visitplan::config::EngineConfig;
use visitplan::confirmation::Response;
use visitplan::engine::{Engine, Mutation, OptimizerChoice};
use visitplan::store::{self, parse_roster_files, SnapshotStore, StoreError};

const CLIENTS: &[u8] = b"client_id,name,country,city,rank,teu
acme,Acme,BR,Santos,1,620000
bolt,Bolt,BR,Santos,,120000
crow,Crow,BR,Manaus,7,100
dune,Dune,BR,,2,5
eel,Eel,BR,Manaus,3,lots
";

const TERMINALS: &[u8] = b"terminal_id,name,owner_client_id,city,country,teu
t1,One,acme,Santos,BR,1000
t2,Two,ghost,Santos,BR,5
";

#[test]
fn bad_rows_are_reported_by_line_and_good_rows_kept() {
    let parsed = parse_roster_files(CLIENTS, TERMINALS).unwrap();
    let ids: Vec<&str> = parsed.clients.iter().map(|c| c.client_id.as_str()).collect();
    assert_eq!(ids, ["acme", "bolt"]);
    assert_eq!(parsed.clients[1].rank, None);
    assert_eq!(parsed.terminals.len(), 1);
    assert_eq!(parsed.clients[0].terminal_ids, ["t1"]);
    let found: Vec<(usize, &str)> = parsed.report.iter().map(|e| (e.row, e.field.as_str())).collect();
    assert!(found.contains(&(4, "rank")), "{found:?}");
    assert!(found.contains(&(5, "city")), "{found:?}");
    assert!(found.contains(&(6, "teu")), "{found:?}");
    assert!(found.contains(&(3, "owner_client_id")), "{found:?}");
}

#[test]
fn header_and_duplicate_errors() {
    let err = parse_roster_files(b"id,name\n1,x\n", TERMINALS).unwrap_err();
    assert!(matches!(err, StoreError::Format { .. }));
    let dup = b"client_id,name,country,city,rank,teu\na,A,BR,X,1,1\nb,B,BR,X,1,1\na,C,BR,X,2,2\n";
    match parse_roster_files(dup, TERMINALS).unwrap_err() {
        StoreError::DuplicateKey { id, rows, .. } => {
            assert_eq!(id, "a");
            assert_eq!(rows, [2, 4]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn columns_may_come_in_any_order() {
    let shuffled = b"teu,city,rank,client_id,country,name\n10,Lima,2,zed,PE,Zed\n";
    let parsed = parse_roster_files(shuffled, b"terminal_id,name,owner_client_id,city,country,teu\n").unwrap();
    assert_eq!(parsed.clients[0].city, "Lima");
    assert_eq!(parsed.clients[0].rank, Some(2));
}

#[test]
fn engine_reopens_from_its_latest_snapshot() {
    let dir = TempDir::new().unwrap();
    let parsed = parse_roster_files(CLIENTS, TERMINALS).unwrap();
    let saved = {
        let mut engine = Engine::open(dir.path(), EngineConfig::default()).unwrap();
        engine
            .apply(Mutation::Ingest { clients: parsed.clients.clone(), terminals: parsed.terminals.clone() })
            .unwrap();
        engine.apply(Mutation::SetRank { client_id: "bolt".into(), rank: 2 }).unwrap();
        engine.apply(Mutation::GenerateSchedule { optimizer: OptimizerChoice::Ga, seed: 5 }).unwrap();
        engine.apply(Mutation::RespondToMeeting { meeting_id: "acme.v1".into(), response: Response::Confirmed }).unwrap();
        engine.state().clone()
    };
    let reopened = Engine::open(dir.path(), EngineConfig::default()).unwrap();
    assert_eq!(reopened.state(), &saved);
    assert_eq!(saved.revision, 4);
}

#[test]
fn failed_mutation_leaves_state_and_revision_alone() {
    let dir = TempDir::new().unwrap();
    let mut engine = Engine::open(dir.path(), EngineConfig::default()).unwrap();
    let parsed = parse_roster_files(CLIENTS, TERMINALS).unwrap();
    engine.apply(Mutation::Ingest { clients: parsed.clients, terminals: parsed.terminals }).unwrap();
    let before = engine.state().clone();
    assert!(engine.apply(Mutation::SetRank { client_id: "acme".into(), rank: 0 }).is_err());
    assert!(engine.apply(Mutation::GenerateSchedule { optimizer: OptimizerChoice::Greedy, seed: 0 }).is_err());
    assert_eq!(engine.state(), &before);
    let store = SnapshotStore::open(dir.path(), 50).unwrap();
    assert_eq!(store.revisions().unwrap(), [1]);
}

#[test]
fn retention_prunes_oldest_snapshots() {
    let dir = TempDir::new().unwrap();
    let store = SnapshotStore::open(dir.path(), 3).unwrap();
    let mut state = store::EngineState::default();
    for rev in 1..=6 {
        state.revision = rev;
        store.save(&state).unwrap();
    }
    assert_eq!(store.revisions().unwrap(), [4, 5, 6]);
    assert_eq!(store.load_latest().unwrap().unwrap().revision, 6);
    assert_eq!(store.load(5).unwrap().revision, 5);
}

#[test]
fn snapshot_version_is_checked() {
    let bytes = br#"{"format_version": 9, "revision": 1, "state": {}}"#;
    assert!(matches!(store::load_snapshot(bytes), Err(StoreError::Version(9))));
    assert!(matches!(store::load_snapshot(b"not json"), Err(StoreError::Parse(_))));
}
