//! Roster ingestion from CSV and versioned state snapshots.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::casebook::CaseBase;
use crate::confirmation::ConfirmationLedger;
use crate::domain::{
    is_valid_rank, link_terminals, validate_roster, validate_visitors, Client, Schedule, Terminal,
    ValidationReport, Visitor,
};

pub const SNAPSHOT_FORMAT_VERSION: u32 = 1;

pub const CLIENT_COLUMNS: [&str; 6] = ["client_id", "name", "country", "city", "rank", "teu"];
pub const TERMINAL_COLUMNS: [&str; 6] = ["terminal_id", "name", "owner_client_id", "city", "country", "teu"];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{file}: bad header, expected columns {expected}")]
    Format { file: String, expected: String },
    #[error("{file}: duplicate id {id} on rows {rows:?}")]
    DuplicateKey { file: String, id: String, rows: Vec<usize> },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("state is invalid: {} violation(s)", .0.violations.len())]
    Invalid(ValidationReport),
    #[error("snapshot format version {0} is not supported")]
    Version(u64),
    #[error("snapshot parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

/// A data row that could not be used. `row` is the line number in the file,
/// counting the header as line 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub file: String,
    pub row: usize,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ParsedRoster {
    pub clients: Vec<Client>,
    pub terminals: Vec<Terminal>,
    pub report: Vec<RowError>,
}

type Row = BTreeMap<String, String>;

fn read_rows(file: &str, bytes: &[u8], columns: &[&str]) -> Result<Vec<(usize, Row)>, StoreError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(bytes);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut sorted_headers = headers.clone();
    sorted_headers.sort();
    let mut expected: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
    expected.sort();
    if sorted_headers != expected {
        return Err(StoreError::Format { file: file.to_string(), expected: columns.join(",") });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row: Row = headers.iter().cloned().zip(record.iter().map(str::to_string)).collect();
        rows.push((i + 2, row));
    }
    Ok(rows)
}

fn check_duplicates(file: &str, rows: &[(usize, Row)], key: &str) -> Result<(), StoreError> {
    let mut seen: HashMap<&str, Vec<usize>> = HashMap::new();
    for (line, row) in rows {
        seen.entry(row[key].as_str()).or_default().push(*line);
    }
    let mut dups: Vec<(&str, Vec<usize>)> = seen.into_iter().filter(|(_, r)| r.len() > 1).collect();
    dups.sort_by_key(|(_, r)| r[0]);
    match dups.into_iter().next() {
        Some((id, rows)) => Err(StoreError::DuplicateKey { file: file.to_string(), id: id.to_string(), rows }),
        None => Ok(()),
    }
}

struct RowCheck<'a> {
    file: &'a str,
    line: usize,
    row: &'a Row,
    errors: Vec<RowError>,
}

impl RowCheck<'_> {
    fn fail(&mut self, field: &str, message: &str) {
        self.errors.push(RowError {
            file: self.file.to_string(),
            row: self.line,
            field: field.to_string(),
            message: message.to_string(),
        });
    }

    fn required(&mut self, field: &str) -> String {
        let value = self.row.get(field).cloned().unwrap_or_default();
        if value.is_empty() {
            self.fail(field, &format!("{field} required"));
        }
        value
    }

    fn teu(&mut self) -> u64 {
        match self.row.get("teu").map(String::as_str).unwrap_or("") {
            "" => 0,
            s => s.parse().unwrap_or_else(|_| {
                self.fail("teu", "non-numeric teu");
                0
            }),
        }
    }
}

/// Parses both roster files, keeping good rows and reporting bad ones.
pub fn parse_roster_files(clients_csv: &[u8], terminals_csv: &[u8]) -> Result<ParsedRoster, StoreError> {
    let client_rows = read_rows("clients", clients_csv, &CLIENT_COLUMNS)?;
    check_duplicates("clients", &client_rows, "client_id")?;
    let terminal_rows = read_rows("terminals", terminals_csv, &TERMINAL_COLUMNS)?;
    check_duplicates("terminals", &terminal_rows, "terminal_id")?;

    let mut parsed = ParsedRoster::default();
    for (line, row) in &client_rows {
        let mut check = RowCheck { file: "clients", line: *line, row, errors: Vec::new() };
        let client_id = check.required("client_id");
        let city = check.required("city");
        let country = check.required("country");
        let teu = check.teu();
        let rank = match row["rank"].as_str() {
            "" => None,
            s => match s.parse::<u8>() {
                Ok(r) if is_valid_rank(r) => Some(r),
                Ok(_) => {
                    check.fail("rank", "rank out of range 1..5");
                    None
                }
                Err(_) => {
                    check.fail("rank", "non-numeric rank");
                    None
                }
            },
        };
        if check.errors.is_empty() {
            let name = if row["name"].is_empty() { client_id.clone() } else { row["name"].clone() };
            parsed.clients.push(Client { client_id, name, country, city, rank, teu, terminal_ids: Vec::new() });
        } else {
            parsed.report.extend(check.errors);
        }
    }
    for (line, row) in &terminal_rows {
        let mut check = RowCheck { file: "terminals", line: *line, row, errors: Vec::new() };
        let terminal_id = check.required("terminal_id");
        let owner_client_id = check.required("owner_client_id");
        let teu = check.teu();
        if !owner_client_id.is_empty() && !parsed.clients.iter().any(|c| c.client_id == owner_client_id) {
            check.fail("owner_client_id", "dangling owner reference");
        }
        if check.errors.is_empty() {
            parsed.terminals.push(Terminal {
                terminal_id,
                name: row["name"].clone(),
                owner_client_id,
                city: row["city"].clone(),
                country: row["country"].clone(),
                teu,
            });
        } else {
            parsed.report.extend(check.errors);
        }
    }
    link_terminals(&mut parsed.clients, &parsed.terminals);
    Ok(parsed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EngineState {
    pub roster: Vec<Client>,
    pub terminals: Vec<Terminal>,
    pub visitors: Vec<Visitor>,
    pub active_schedule: Option<Schedule>,
    pub ledger: ConfirmationLedger,
    pub case_base: CaseBase,
    pub revision: u64,
    /// TEU before the most recent change, per client.
    #[serde(default)]
    pub previous_teu: BTreeMap<String, u64>,
}

impl EngineState {
    pub fn validate(&self) -> Result<(), StoreError> {
        let mut report = validate_roster(&self.roster, &self.terminals);
        report.violations.extend(validate_visitors(&self.visitors).violations);
        if report.is_valid() {
            Ok(())
        } else {
            Err(StoreError::Invalid(report))
        }
    }

    pub fn client(&self, client_id: &str) -> Option<&Client> {
        self.roster.iter().find(|c| c.client_id == client_id)
    }
}

/// Applies `mutation` to a copy of `state`. The copy replaces the original
/// only if it is valid afterwards, in which case its revision is one higher.
pub fn commit<T, E>(
    state: &EngineState,
    mutation: impl FnOnce(&mut EngineState) -> Result<T, E>,
) -> Result<(EngineState, T), E>
where
    E: From<StoreError>,
{
    let mut next = state.clone();
    let out = mutation(&mut next)?;
    next.validate()?;
    next.revision = state.revision + 1;
    Ok((next, out))
}

#[derive(Serialize)]
struct SnapshotOut<'a> {
    format_version: u32,
    revision: u64,
    state: &'a EngineState,
}

#[derive(Deserialize)]
struct SnapshotIn {
    revision: u64,
    state: EngineState,
}

pub fn save_snapshot(state: &EngineState) -> Vec<u8> {
    let doc = SnapshotOut { format_version: SNAPSHOT_FORMAT_VERSION, revision: state.revision, state };
    serde_json::to_vec_pretty(&doc).expect("state serializes")
}

pub fn load_snapshot(bytes: &[u8]) -> Result<EngineState, StoreError> {
    let value: serde_json::Value = serde_json::from_slice(bytes)?;
    let version = value.get("format_version").and_then(serde_json::Value::as_u64).unwrap_or(0);
    if version != u64::from(SNAPSHOT_FORMAT_VERSION) {
        return Err(StoreError::Version(version));
    }
    let doc: SnapshotIn = serde_json::from_value(value)?;
    let mut state = doc.state;
    state.revision = doc.revision;
    Ok(state)
}

/// Snapshot files in a directory, one per revision, newest kept.
#[derive(Debug, Clone)]
pub struct SnapshotStore {
    dir: PathBuf,
    retention: usize,
}

impl SnapshotStore {
    pub fn open(dir: impl Into<PathBuf>, retention: usize) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_error(&dir))?;
        Ok(Self { dir, retention: retention.max(1) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, revision: u64) -> PathBuf {
        self.dir.join(format!("state-{revision:010}.json"))
    }

    /// Revisions on disk, oldest first.
    pub fn revisions(&self) -> Result<Vec<u64>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir).map_err(io_error(&self.dir))? {
            let name = entry.map_err(io_error(&self.dir))?.file_name();
            let name = name.to_string_lossy();
            if let Some(rev) = name.strip_prefix("state-").and_then(|s| s.strip_suffix(".json")) {
                if let Ok(rev) = rev.parse() {
                    out.push(rev);
                }
            }
        }
        out.sort_unstable();
        Ok(out)
    }

    pub fn save(&self, state: &EngineState) -> Result<PathBuf, StoreError> {
        let path = self.path_for(state.revision);
        let tmp = self.dir.join(format!(".state-{}.tmp", state.revision));
        let mut f = fs::File::create(&tmp).map_err(io_error(&tmp))?;
        f.write_all(&save_snapshot(state)).map_err(io_error(&tmp))?;
        f.sync_all().map_err(io_error(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_error(&path))?;
        let revisions = self.revisions()?;
        let excess = revisions.len().saturating_sub(self.retention);
        for rev in &revisions[..excess] {
            let old = self.path_for(*rev);
            fs::remove_file(&old).map_err(io_error(&old))?;
        }
        Ok(path)
    }

    pub fn load(&self, revision: u64) -> Result<EngineState, StoreError> {
        let path = self.path_for(revision);
        load_snapshot(&fs::read(&path).map_err(io_error(&path))?)
    }

    pub fn load_latest(&self) -> Result<Option<EngineState>, StoreError> {
        match self.revisions()?.last() {
            Some(rev) => self.load(*rev).map(Some),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLIENTS: &str = "client_id,name,country,city,rank,teu\nA,Alpha,NL,Rotterdam,1,600000\nB,Beta,DE,Hamburg,,120000\n";
    const TERMINALS: &str = "terminal_id,name,owner_client_id,city,country,teu\nT1,Maas,A,Rotterdam,NL,5000\n";

    #[test]
    fn well_formed_rows_parse() {
        let p = parse_roster_files(CLIENTS.as_bytes(), TERMINALS.as_bytes()).unwrap();
        assert_eq!(p.clients.len(), 2);
        assert!(p.report.is_empty());
        assert_eq!(p.clients[1].rank, None);
        assert_eq!(p.clients[0].terminal_ids, vec!["T1".to_string()]);
        assert_eq!(p.terminals[0].teu, 5000);
    }

    #[test]
    fn bad_teu_is_reported_per_row() {
        let text = "client_id,name,country,city,rank,teu\nA,Alpha,NL,Rotterdam,1,abc\nB,Beta,DE,Hamburg,2,10\n";
        let p = parse_roster_files(text.as_bytes(), TERMINAL_COLUMNS.join(",").as_bytes()).unwrap();
        assert_eq!(p.clients.len(), 1);
        assert_eq!(p.report.len(), 1);
        assert_eq!(p.report[0].row, 2);
        assert_eq!(p.report[0].message, "non-numeric teu");
    }

    #[test]
    fn duplicate_ids_name_both_rows() {
        let mut text = String::from("client_id,name,country,city,rank,teu\n");
        for i in 0..9 {
            let id = if i == 2 || i == 7 { "DUP".to_string() } else { format!("C{i}") };
            text.push_str(&format!("{id},n,NL,X,2,1\n"));
        }
        let err = parse_roster_files(text.as_bytes(), TERMINAL_COLUMNS.join(",").as_bytes()).unwrap_err();
        match err {
            StoreError::DuplicateKey { id, rows, .. } => {
                assert_eq!(id, "DUP");
                assert_eq!(rows, vec![4, 9]);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn malformed_header_is_a_format_error() {
        let err = parse_roster_files(b"id,city\n1,X\n", b"").unwrap_err();
        assert!(matches!(err, StoreError::Format { .. }));
    }

    #[test]
    fn snapshot_round_trip() {
        let p = parse_roster_files(CLIENTS.as_bytes(), TERMINALS.as_bytes()).unwrap();
        let state = EngineState { roster: p.clients, terminals: p.terminals, revision: 3, ..Default::default() };
        let bytes = save_snapshot(&state);
        assert_eq!(load_snapshot(&bytes).unwrap(), state);
        assert!(matches!(load_snapshot(&bytes[..bytes.len() / 2]), Err(StoreError::Parse(_))));
        let other = String::from_utf8(bytes).unwrap().replace("\"format_version\": 1", "\"format_version\": 7");
        assert!(matches!(load_snapshot(other.as_bytes()), Err(StoreError::Version(7))));
    }

    #[test]
    fn invalid_commit_leaves_state_alone() {
        let state = EngineState::default();
        let result: Result<_, StoreError> = commit(&state, |s| {
            s.roster.push(Client::new("A", "X", Some(9), 1));
            Ok(())
        });
        assert!(matches!(result, Err(StoreError::Invalid(_))));
        assert_eq!(state.revision, 0);
        let (next, ()) = commit::<_, StoreError>(&state, |s| {
            s.roster.push(Client::new("A", "X", Some(2), 1));
            Ok(())
        })
        .unwrap();
        assert_eq!(next.revision, 1);
    }

    #[test]
    fn store_keeps_latest_revisions() {
        let dir = tempfile::tempdir().unwrap();
        let store = SnapshotStore::open(dir.path(), 3).unwrap();
        let mut state = EngineState::default();
        for rev in 1..=5 {
            state.revision = rev;
            store.save(&state).unwrap();
        }
        assert_eq!(store.revisions().unwrap(), vec![3, 4, 5]);
        assert_eq!(store.load_latest().unwrap().unwrap().revision, 5);
    }
}
