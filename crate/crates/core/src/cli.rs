//! Operator command line. Each invocation loads the newest snapshot from the
//! data directory, performs one action and saves the result if it changed.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::casebook::{self, CaseDescriptor};
use crate::config::EngineConfig;
use crate::confirmation::Response;
use crate::engine::{self, Applied, Engine, Mutation, OptimizerChoice, ViewKind, ViewRows};
use crate::error::EngineError;
use crate::scheduler;
use crate::store::{parse_roster_files, StoreError, TERMINAL_COLUMNS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "visitplan", about = "Client visit planner", version)]
pub struct Cli {
    #[arg(long, global = true, value_enum, default_value = "table")]
    pub format: Format,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "visitplan-data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replace the roster from CSV files.
    Ingest {
        #[arg(long)]
        clients: PathBuf,
        #[arg(long)]
        terminals: Option<PathBuf>,
    },
    #[command(subcommand)]
    Rank(RankCommand),
    #[command(subcommand)]
    Schedule(ScheduleCommand),
    #[command(subcommand)]
    Meeting(MeetingCommand),
    #[command(subcommand)]
    Case(CaseCommand),
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Static UI bundle served at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RankCommand {
    Suggest {
        #[arg(long)]
        variation_threshold_pct: Option<f64>,
    },
    Set { client: String, rank: u8 },
    Calc { client: String },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ViewArg {
    Date,
    Client,
}

#[derive(Debug, Subcommand)]
pub enum ScheduleCommand {
    Generate {
        #[arg(long, value_enum, default_value = "greedy")]
        optimizer: OptimizerArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Show {
        #[arg(long, value_enum, default_value = "date")]
        view: ViewArg,
        #[arg(long, default_value_t = 180)]
        horizon: u32,
    },
    /// Report whether mandatory visits fit the horizon.
    Check,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Greedy,
    Ga,
}

#[derive(Debug, Subcommand)]
pub enum MeetingCommand {
    ListPending,
    Confirm { id: String },
    Deny { id: String },
}

#[derive(Debug, Subcommand)]
pub enum CaseCommand {
    List,
    /// Evaluate the active schedule and keep it as a case.
    Retain {
        #[arg(long, default_value = "")]
        notes: String,
    },
    /// Find the case closest to the current roster.
    Retrieve {
        #[arg(long)]
        threshold: Option<f64>,
    },
}

struct Out<'a, W: Write> {
    format: Format,
    w: &'a mut W,
}

impl<W: Write> Out<'_, W> {
    fn emit<T: Serialize>(&mut self, value: &T, table: impl FnOnce() -> Vec<String>) -> std::io::Result<()> {
        match self.format {
            Format::Json => writeln!(self.w, "{}", serde_json::to_string_pretty(value).expect("serializable")),
            Format::Table => {
                for line in table() {
                    writeln!(self.w, "{line}")?;
                }
                Ok(())
            }
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, EngineError> {
    std::fs::read(path).map_err(|source| {
        EngineError::Store(StoreError::Io { path: path.display().to_string(), source })
    })
}

fn applied_lines(revision: u64, applied: &Applied) -> Vec<String> {
    let detail = match applied {
        Applied::Ingested { clients, terminals } => format!("ingested {clients} clients, {terminals} terminals"),
        Applied::Client { client } => format!(
            "client {} rank {}",
            client.client_id,
            client.rank.map_or("-".to_string(), |r| r.to_string())
        ),
        Applied::Terminal { terminal } => format!("terminal {}", terminal.terminal_id),
        Applied::Visitor { visitor } => format!("visitor {}", visitor.visitor_id),
        Applied::Deleted { entity, id, .. } => format!("deleted {entity} {id}"),
        Applied::Generated { generator, fitness, stats, reused_case, .. } => format!(
            "generated ({generator:?}) fitness {fitness:.1}: tvd {} ttd {} idle {} cities {}{}",
            stats.tvd,
            stats.ttd,
            stats.idle,
            stats.n_cities,
            reused_case.as_ref().map(|c| format!(", seeded from {c}")).unwrap_or_default()
        ),
        Applied::Confirmed { meeting_id } => format!("confirmed {meeting_id}"),
        Applied::Denied { meeting_id, summary } => format!(
            "denied {meeting_id}; first changed day {}; moved {} dropped {} added {}",
            summary.first_changed_day.map_or("none".to_string(), |d| d.to_string()),
            summary.meetings_moved.len(),
            summary.meetings_dropped.len(),
            summary.meetings_added.len()
        ),
        Applied::Retained { case_id, outcome, issues } => {
            let mut s = format!("retained {case_id} ({outcome:?})");
            for i in issues {
                s.push_str(&format!("; {i}"));
            }
            s
        }
    };
    vec![format!("revision {revision}: {detail}")]
}

#[derive(Serialize)]
struct MutationJson<'a> {
    revision: u64,
    #[serde(flatten)]
    result: &'a Applied,
}

fn mutate<W: Write>(engine: &mut Engine, out: &mut Out<'_, W>, m: Mutation) -> Result<(), EngineError> {
    let applied = engine.apply(m)?;
    let revision = engine.state().revision;
    out.emit(&MutationJson { revision, result: &applied }, || applied_lines(revision, &applied))
        .map_err(io)?;
    Ok(())
}

fn io(e: std::io::Error) -> EngineError {
    EngineError::Store(StoreError::Io { path: "<stdout>".into(), source: e })
}

fn execute<W: Write>(cli: Cli, out: &mut Out<'_, W>) -> Result<(), EngineError> {
    let config = match &cli.config {
        Some(path) => EngineConfig::load(path)?,
        None => EngineConfig::default(),
    };
    if let Command::Serve { port, host, ui_dir } = cli.command {
        let engine = Engine::open(&cli.data_dir, config)?;
        let addr: SocketAddr = format!("{host}:{port}")
            .parse()
            .map_err(|_| EngineError::bad_request("host", "not an IP address"))?;
        let runtime = tokio::runtime::Runtime::new().map_err(io)?;
        return runtime.block_on(crate::service::serve(engine, addr, ui_dir)).map_err(io);
    }
    let mut engine = Engine::open(&cli.data_dir, config)?;
    match cli.command {
        Command::Serve { .. } => unreachable!("handled above"),
        Command::Ingest { clients, terminals } => {
            let clients = read_file(&clients)?;
            let terminals = match terminals {
                Some(p) => read_file(&p)?,
                None => TERMINAL_COLUMNS.join(",").into_bytes(),
            };
            let parsed = parse_roster_files(&clients, &terminals)?;
            for e in &parsed.report {
                eprintln!("{} line {}: {}: {}", e.file, e.row, e.field, e.message);
            }
            mutate(&mut engine, out, Mutation::Ingest { clients: parsed.clients, terminals: parsed.terminals })
        }
        Command::Rank(RankCommand::Suggest { variation_threshold_pct }) => {
            let s = engine::rank_suggestions(engine.state(), engine.config(), variation_threshold_pct)?;
            out.emit(&s, || {
                let mut lines = vec![format!("{:<16} {:>7} {:>9}  reasons", "client", "current", "suggested")];
                for x in &s {
                    lines.push(format!(
                        "{:<16} {:>7} {:>9}  {:?}",
                        x.client_id,
                        x.current_rank.map_or("-".into(), |r| r.to_string()),
                        x.suggested_rank,
                        x.reasons
                    ));
                }
                lines
            })
            .map_err(io)
        }
        Command::Rank(RankCommand::Set { client, rank }) => {
            mutate(&mut engine, out, Mutation::SetRank { client_id: client, rank })
        }
        Command::Rank(RankCommand::Calc { client }) => {
            mutate(&mut engine, out, Mutation::CalculateRank { client_id: client })
        }
        Command::Schedule(ScheduleCommand::Generate { optimizer, seed }) => {
            let optimizer = match optimizer {
                OptimizerArg::Greedy => OptimizerChoice::Greedy,
                OptimizerArg::Ga => OptimizerChoice::Ga,
            };
            mutate(&mut engine, out, Mutation::GenerateSchedule { optimizer, seed })
        }
        Command::Schedule(ScheduleCommand::Show { view, horizon }) => {
            let kind = match view {
                ViewArg::Date => ViewKind::ByDate,
                ViewArg::Client => ViewKind::ByClient,
            };
            let v = engine::schedule_view(engine.state(), engine.config(), kind, horizon)?;
            out.emit(&v, || view_lines(&v)).map_err(io)
        }
        Command::Schedule(ScheduleCommand::Check) => {
            let r = scheduler::budget_check(&engine.state().roster, &engine.config().schedule)?;
            out.emit(&r, || {
                let mut lines = vec![
                    format!("required visiting days {}", r.total_required_days),
                    format!("travel days {}", r.travel_days),
                    format!("slack {}", r.slack_days),
                    format!("fits {}", r.fits),
                ];
                for (c, v) in &r.dropped {
                    lines.push(format!("drop {c} visit {v}"));
                }
                lines
            })
            .map_err(io)
        }
        Command::Meeting(MeetingCommand::ListPending) => {
            let rows = engine::pending_meetings(engine.state())?;
            out.emit(&rows, || date_lines(&rows)).map_err(io)
        }
        Command::Meeting(MeetingCommand::Confirm { id }) => {
            mutate(&mut engine, out, Mutation::RespondToMeeting { meeting_id: id, response: Response::Confirmed })
        }
        Command::Meeting(MeetingCommand::Deny { id }) => {
            mutate(&mut engine, out, Mutation::RespondToMeeting { meeting_id: id, response: Response::Denied })
        }
        Command::Case(CaseCommand::List) => {
            let cases = engine.state().case_base.cases();
            out.emit(&cases, || {
                cases
                    .iter()
                    .map(|c| format!("{} {:?} {} {}", c.case_id, c.outcome, c.index_key, c.notes))
                    .collect()
            })
            .map_err(io)
        }
        Command::Case(CaseCommand::Retain { notes }) => mutate(&mut engine, out, Mutation::RetainCase { notes }),
        Command::Case(CaseCommand::Retrieve { threshold }) => {
            let query = CaseDescriptor::from_roster(&engine.state().roster, &engine.config().schedule);
            let threshold = threshold.unwrap_or(engine.config().similarity_threshold);
            let hit = casebook::retrieve(&engine.state().case_base, &query, threshold)
                .map(|(c, s)| serde_json::json!({ "case_id": c.case_id, "similarity": s, "outcome": c.outcome }));
            out.emit(&hit, || match &hit {
                Some(h) => vec![format!("{} similarity {:.3}", h["case_id"].as_str().unwrap_or(""), h["similarity"].as_f64().unwrap_or(0.0))],
                None => vec!["no case above threshold".to_string()],
            })
            .map_err(io)
        }
    }
}

fn date_lines(rows: &[engine::DateRow]) -> Vec<String> {
    let mut lines = vec![format!("{:>4} {:<3} {:<14} {:<12} {:>4} {:>5} {:<10}", "day", "slot", "city", "meeting", "rank", "visit", "status")];
    for r in rows {
        lines.push(format!(
            "{:>4} {:<3} {:<14} {:<12} {:>4} {:>5} {:<10}",
            r.day_index,
            r.slot.to_string(),
            r.city,
            r.meeting_id,
            r.rank.map_or("-".into(), |x| x.to_string()),
            r.visit_number,
            format!("{:?}", r.status).to_lowercase()
        ));
    }
    lines
}

fn view_lines(v: &engine::ScheduleView) -> Vec<String> {
    let mut lines = vec![format!(
        "revision {} horizon {}: tvd {} ttd {} idle {}",
        v.revision, v.horizon, v.stats.tvd, v.stats.ttd, v.stats.idle
    )];
    match &v.rows {
        ViewRows::ByDate(rows) => lines.extend(date_lines(rows)),
        ViewRows::ByClient(rows) => {
            for r in rows {
                let visits: Vec<String> = r.visits.iter().map(|m| format!("d{}{}", m.day_index, m.slot)).collect();
                lines.push(format!(
                    "{:<16} rank {} {:<14} {}",
                    r.client_id,
                    r.rank.map_or("-".into(), |x| x.to_string()),
                    r.city,
                    visits.join(" ")
                ));
            }
        }
    }
    lines
}

/// Runs one command, writing results to `out` and errors to stderr.
/// Returns the process exit code.
pub fn run<I, T, W>(args: I, out: &mut W) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let format = cli.format;
    let mut sink = Out { format, w: out };
    match execute(cli, &mut sink) {
        Ok(()) => 0,
        Err(e) => {
            let api = e.to_api();
            match format {
                Format::Json => eprintln!("{}", serde_json::to_string(&api).expect("serializable")),
                Format::Table => eprintln!("error [{}]: {}", api.code, api.message),
            }
            1
        }
    }
}
