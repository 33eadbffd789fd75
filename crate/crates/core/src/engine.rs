//! The single mutation path over [`EngineState`] plus read-only projections.
//!
//! Every change goes through [`apply`], which runs on a copy of the state and
//! commits it with a new revision only if the result validates.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::casebook::{self, Case, CaseDescriptor, Evaluation, Outcome};
use crate::config::EngineConfig;
use crate::confirmation::{self, CandidateStatus, RegenerationStrategy, RegenerationSummary, Response};
use crate::domain::{
    link_terminals, Client, DayKind, Generator, MeetingStatus, Schedule, ScheduleStats, Slot, Terminal, Visitor,
};
use crate::error::EngineError;
use crate::optimizer::{self, GaParams};
use crate::ranking::{self, RankSuggestion};
use crate::scheduler::{self, FeasibilityReport, PlanningInput};
use crate::store::{commit, EngineState, SnapshotStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    #[default]
    Greedy,
    Ga,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Mutation {
    /// Replaces roster and terminals; the active schedule is dropped.
    Ingest { clients: Vec<Client>, terminals: Vec<Terminal> },
    CreateClient(Client),
    UpdateClient(Client),
    DeleteClient { client_id: String, confirm: bool },
    CreateTerminal(Terminal),
    UpdateTerminal(Terminal),
    DeleteTerminal { terminal_id: String, confirm: bool },
    CreateVisitor(Visitor),
    UpdateVisitor(Visitor),
    DeleteVisitor { visitor_id: String, confirm: bool },
    SetRank { client_id: String, rank: u8 },
    CalculateRank { client_id: String },
    GenerateSchedule { optimizer: OptimizerChoice, seed: u64 },
    RespondToMeeting { meeting_id: String, response: Response },
    /// Evaluates the active schedule and stores it as a case.
    RetainCase { notes: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Applied {
    Ingested { clients: usize, terminals: usize },
    Client { client: Client },
    Terminal { terminal: Terminal },
    Visitor { visitor: Visitor },
    Deleted { entity: String, id: String, cascaded: Vec<String> },
    Generated {
        generator: Generator,
        fitness: f64,
        stats: ScheduleStats,
        reused_case: Option<String>,
        feasibility: FeasibilityReport,
    },
    Confirmed { meeting_id: String },
    Denied { meeting_id: String, summary: RegenerationSummary },
    Retained { case_id: String, outcome: Outcome, issues: Vec<String> },
}

fn not_found(entity: &'static str, id: &str) -> EngineError {
    EngineError::NotFound { entity, id: id.to_string() }
}

fn note_teu_change(state: &mut EngineState, client_id: &str, old: u64, new: u64) {
    if old != new {
        state.previous_teu.insert(client_id.to_string(), old);
    }
}

fn relink(state: &mut EngineState) {
    link_terminals(&mut state.roster, &state.terminals);
}

fn ga_params(config: &EngineConfig, seed: u64) -> GaParams {
    GaParams { seed, ..config.ga.clone() }
}

fn generate(state: &mut EngineState, config: &EngineConfig, choice: OptimizerChoice, seed: u64) -> Result<Applied, EngineError> {
    let params = &config.schedule;
    let feasibility = scheduler::budget_check(&state.roster, params)?;
    let input = PlanningInput::fresh(&state.roster, params, &state.ledger, seed);
    let (schedule, reused_case) = match choice {
        OptimizerChoice::Greedy => (scheduler::generate_greedy_schedule(&input)?, None),
        OptimizerChoice::Ga => {
            let query = CaseDescriptor::from_roster(&state.roster, params);
            let reused = casebook::retrieve_reusable(&state.case_base, &query, config.similarity_threshold);
            let (seeds, case_id) = match reused {
                Some((case, _)) => (vec![casebook::reuse(case, &state.roster)?], Some(case.case_id.clone())),
                None => (Vec::new(), None),
            };
            let report = optimizer::evolve_seeded(&input, &config.weights, &ga_params(config, seed), &seeds)?;
            (report.schedule, case_id)
        }
    };
    let fitness = optimizer::fitness(&schedule, &state.roster, params, &config.weights)
        .map_err(|v| EngineError::bad_request("schedule", v.to_string()))?;
    state.ledger.register_schedule(&schedule);
    let applied = Applied::Generated {
        generator: schedule.generator,
        fitness,
        stats: schedule.stats,
        reused_case,
        feasibility,
    };
    state.active_schedule = Some(schedule);
    Ok(applied)
}

fn respond(
    state: &mut EngineState,
    config: &EngineConfig,
    meeting_id: &str,
    response: Response,
) -> Result<Applied, EngineError> {
    let schedule = state.active_schedule.as_ref().ok_or(EngineError::NotGenerated)?;
    let Some(meeting) = schedule.find_meeting(meeting_id).cloned() else {
        let unknown = confirmation::ConfirmationError::UnknownCandidate {
            client_id: meeting_id.to_string(),
            visit_number: 0,
        };
        // A candidate that already left the schedule reports its own state.
        let parsed = meeting_id.rsplit_once(".v").and_then(|(c, v)| Some((c, v.parse::<u32>().ok()?)));
        return match parsed {
            Some((client, visit)) => match confirmation::record_response(&state.ledger, client, visit, response, 0) {
                Err(e) => Err(e.into()),
                Ok(_) => Err(unknown.into()),
            },
            None => Err(unknown.into()),
        };
    };
    state.ledger = confirmation::record_response(
        &state.ledger,
        &meeting.client_id,
        meeting.visit_number,
        response,
        meeting.day_index,
    )?;
    match response {
        Response::Confirmed => {
            let schedule = state.active_schedule.as_mut().expect("checked above");
            confirmation::sync_statuses(schedule, &state.ledger);
            Ok(Applied::Confirmed { meeting_id: meeting_id.to_string() })
        }
        Response::Denied => {
            let strategy = match schedule.generator {
                Generator::Greedy => RegenerationStrategy::Greedy,
                Generator::Ga => RegenerationStrategy::Ga {
                    ga: ga_params(config, schedule.seed),
                    weights: config.weights.clone(),
                },
            };
            let next = confirmation::regenerate_from(
                schedule,
                &state.roster,
                &config.schedule,
                &state.ledger,
                meeting.day_index,
                schedule.seed,
                &strategy,
            )?;
            let summary = confirmation::summarize_changes(schedule, &next, meeting.day_index);
            state.ledger.register_schedule(&next);
            state.active_schedule = Some(next);
            Ok(Applied::Denied { meeting_id: meeting_id.to_string(), summary })
        }
    }
}

fn retain_case(state: &mut EngineState, config: &EngineConfig, notes: String) -> Result<Applied, EngineError> {
    let schedule = state.active_schedule.clone().ok_or(EngineError::NotGenerated)?;
    let descriptor = CaseDescriptor::from_roster(&state.roster, &config.schedule);
    let evaluation = Evaluation::of_schedule(&schedule, &state.roster, &config.schedule);
    let case = casebook::revise(&Case::new(descriptor, schedule), evaluation, &notes);
    let issues = casebook::validate_case(&case);
    let outcome = case.outcome.expect("revised");
    state.case_base = casebook::retain(&state.case_base, case)?;
    let case_id = state.case_base.cases().last().expect("just retained").case_id.clone();
    Ok(Applied::Retained { case_id, outcome, issues })
}

fn mutate(state: &mut EngineState, mutation: Mutation, config: &EngineConfig) -> Result<Applied, EngineError> {
    match mutation {
        Mutation::Ingest { clients, terminals } => {
            for c in &clients {
                if let Some(old) = state.client(&c.client_id).map(|o| o.teu) {
                    note_teu_change(state, &c.client_id.clone(), old, c.teu);
                }
            }
            let counts = (clients.len(), terminals.len());
            state.roster = clients;
            state.terminals = terminals;
            state.active_schedule = None;
            relink(state);
            Ok(Applied::Ingested { clients: counts.0, terminals: counts.1 })
        }
        Mutation::CreateClient(client) => {
            if state.client(&client.client_id).is_some() {
                return Err(EngineError::AlreadyExists { entity: "client", id: client.client_id });
            }
            state.roster.push(client.clone());
            relink(state);
            let client = state.client(&client.client_id).expect("inserted").clone();
            Ok(Applied::Client { client })
        }
        Mutation::UpdateClient(client) => {
            let pos = state
                .roster
                .iter()
                .position(|c| c.client_id == client.client_id)
                .ok_or_else(|| not_found("client", &client.client_id))?;
            let old = state.roster[pos].teu;
            note_teu_change(state, &client.client_id, old, client.teu);
            state.roster[pos] = client;
            relink(state);
            Ok(Applied::Client { client: state.roster[pos].clone() })
        }
        Mutation::DeleteClient { client_id, confirm } => {
            if !confirm {
                return Err(EngineError::ConfirmationRequired);
            }
            let pos = state
                .roster
                .iter()
                .position(|c| c.client_id == client_id)
                .ok_or_else(|| not_found("client", &client_id))?;
            state.roster.remove(pos);
            let cascaded: Vec<String> = state
                .terminals
                .iter()
                .filter(|t| t.owner_client_id == client_id)
                .map(|t| t.terminal_id.clone())
                .collect();
            state.terminals.retain(|t| t.owner_client_id != client_id);
            state.previous_teu.remove(&client_id);
            relink(state);
            Ok(Applied::Deleted { entity: "client".into(), id: client_id, cascaded })
        }
        Mutation::CreateTerminal(terminal) => {
            if state.terminals.iter().any(|t| t.terminal_id == terminal.terminal_id) {
                return Err(EngineError::AlreadyExists { entity: "terminal", id: terminal.terminal_id });
            }
            state.terminals.push(terminal.clone());
            relink(state);
            Ok(Applied::Terminal { terminal })
        }
        Mutation::UpdateTerminal(terminal) => {
            let slot = state
                .terminals
                .iter_mut()
                .find(|t| t.terminal_id == terminal.terminal_id)
                .ok_or_else(|| not_found("terminal", &terminal.terminal_id))?;
            *slot = terminal.clone();
            relink(state);
            Ok(Applied::Terminal { terminal })
        }
        Mutation::DeleteTerminal { terminal_id, confirm } => {
            if !confirm {
                return Err(EngineError::ConfirmationRequired);
            }
            let before = state.terminals.len();
            state.terminals.retain(|t| t.terminal_id != terminal_id);
            if state.terminals.len() == before {
                return Err(not_found("terminal", &terminal_id));
            }
            relink(state);
            Ok(Applied::Deleted { entity: "terminal".into(), id: terminal_id, cascaded: Vec::new() })
        }
        Mutation::CreateVisitor(visitor) => {
            if state.visitors.iter().any(|v| v.visitor_id == visitor.visitor_id) {
                return Err(EngineError::AlreadyExists { entity: "visitor", id: visitor.visitor_id });
            }
            state.visitors.push(visitor.clone());
            Ok(Applied::Visitor { visitor })
        }
        Mutation::UpdateVisitor(visitor) => {
            let slot = state
                .visitors
                .iter_mut()
                .find(|v| v.visitor_id == visitor.visitor_id)
                .ok_or_else(|| not_found("visitor", &visitor.visitor_id))?;
            *slot = visitor.clone();
            Ok(Applied::Visitor { visitor })
        }
        Mutation::DeleteVisitor { visitor_id, confirm } => {
            if !confirm {
                return Err(EngineError::ConfirmationRequired);
            }
            let before = state.visitors.len();
            state.visitors.retain(|v| v.visitor_id != visitor_id);
            if state.visitors.len() == before {
                return Err(not_found("visitor", &visitor_id));
            }
            Ok(Applied::Deleted { entity: "visitor".into(), id: visitor_id, cascaded: Vec::new() })
        }
        Mutation::SetRank { client_id, rank } => {
            let pos = state
                .roster
                .iter()
                .position(|c| c.client_id == client_id)
                .ok_or_else(|| not_found("client", &client_id))?;
            state.roster[pos] = ranking::apply_manual_rank(&state.roster[pos], rank)?;
            Ok(Applied::Client { client: state.roster[pos].clone() })
        }
        Mutation::CalculateRank { client_id } => {
            let pos = state
                .roster
                .iter()
                .position(|c| c.client_id == client_id)
                .ok_or_else(|| not_found("client", &client_id))?;
            let rank = ranking::calculate_client_rate(&state.roster[pos], &owned_terminals(state, &client_id), &config.tiers)?;
            state.roster[pos].rank = Some(rank);
            Ok(Applied::Client { client: state.roster[pos].clone() })
        }
        Mutation::GenerateSchedule { optimizer, seed } => generate(state, config, optimizer, seed),
        Mutation::RespondToMeeting { meeting_id, response } => respond(state, config, &meeting_id, response),
        Mutation::RetainCase { notes } => retain_case(state, config, notes),
    }
}

/// Applies one mutation and returns the committed state.
pub fn apply(state: &EngineState, mutation: Mutation, config: &EngineConfig) -> Result<(EngineState, Applied), EngineError> {
    commit(state, |next| mutate(next, mutation, config))
}

/// Suggestions for every client whose suggested rank or reasons are worth showing.
fn owned_terminals(state: &EngineState, client_id: &str) -> Vec<Terminal> {
    state.terminals.iter().filter(|t| t.owner_client_id == client_id).cloned().collect()
}

pub fn rank_suggestions(
    state: &EngineState,
    config: &EngineConfig,
    variation_threshold_pct: Option<f64>,
) -> Result<Vec<RankSuggestion>, EngineError> {
    let pct = variation_threshold_pct.unwrap_or(config.variation_threshold_pct);
    if !(pct.is_finite() && pct > 0.0) {
        return Err(EngineError::bad_request("variation_threshold_pct", "must be a positive number"));
    }
    let interest: BTreeSet<String> =
        state.visitors.iter().flat_map(|v| v.interest_countries.iter().cloned()).collect();
    let mut out = Vec::new();
    for c in &state.roster {
        let previous = state.previous_teu.get(&c.client_id).copied().unwrap_or(c.teu);
        let s = ranking::suggest_rank_update(c, &owned_terminals(state, &c.client_id), previous, c.teu, &interest, &config.tiers, pct)?;
        if s.current_rank != Some(s.suggested_rank) || !s.reasons.is_empty() {
            out.push(s);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    #[serde(alias = "date")]
    ByDate,
    #[serde(alias = "client")]
    ByClient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRow {
    pub day_index: u32,
    pub city: String,
    pub slot: Slot,
    pub meeting_id: String,
    pub client_id: String,
    pub client_name: String,
    pub rank: Option<u8>,
    pub visit_number: u32,
    pub status: MeetingStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitRef {
    pub meeting_id: String,
    pub day_index: u32,
    pub slot: Slot,
    pub visit_number: u32,
    pub status: MeetingStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientRow {
    pub client_id: String,
    pub name: String,
    pub rank: Option<u8>,
    pub city: String,
    pub visits: Vec<VisitRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayLine {
    pub day_index: u32,
    #[serde(flatten)]
    pub kind: DayKind,
    pub meetings: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ViewRows {
    ByDate(Vec<DateRow>),
    ByClient(Vec<ClientRow>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleView {
    pub view: ViewKind,
    pub horizon: u32,
    pub revision: u64,
    pub generator: Generator,
    pub stats: ScheduleStats,
    pub days: Vec<DayLine>,
    pub rows: ViewRows,
}

fn date_rows<'a>(state: &'a EngineState, schedule: &'a Schedule, horizon: u32) -> impl Iterator<Item = DateRow> + 'a {
    schedule.days.iter().filter(move |d| d.day_index <= horizon).flat_map(move |d| {
        d.meetings.iter().map(move |m| {
            let client = state.client(&m.client_id);
            DateRow {
                day_index: d.day_index,
                city: d.city().unwrap_or_default().to_string(),
                slot: m.slot,
                meeting_id: m.meeting_id.clone(),
                client_id: m.client_id.clone(),
                client_name: client.map(|c| c.name.clone()).unwrap_or_default(),
                rank: client.and_then(|c| c.rank),
                visit_number: m.visit_number,
                status: m.status,
            }
        })
    })
}

/// Projection of the active schedule up to `horizon` days.
pub fn schedule_view(state: &EngineState, config: &EngineConfig, view: ViewKind, horizon: u32) -> Result<ScheduleView, EngineError> {
    let allowed = [config.schedule.first_window_days, config.schedule.horizon_days];
    if !allowed.contains(&horizon) {
        return Err(EngineError::bad_request("horizon", format!("horizon must be {} or {}", allowed[0], allowed[1])));
    }
    let schedule = state.active_schedule.as_ref().ok_or(EngineError::NotGenerated)?;
    let days = schedule
        .days
        .iter()
        .filter(|d| d.day_index <= horizon)
        .map(|d| DayLine { day_index: d.day_index, kind: d.kind.clone(), meetings: d.meetings.len() })
        .collect();
    let rows = match view {
        ViewKind::ByDate => {
            let mut rows: Vec<DateRow> = date_rows(state, schedule, horizon).collect();
            rows.sort_by_key(|r| (r.day_index, r.slot));
            ViewRows::ByDate(rows)
        }
        ViewKind::ByClient => {
            let mut rows: Vec<ClientRow> = state
                .roster
                .iter()
                .map(|c| ClientRow {
                    client_id: c.client_id.clone(),
                    name: c.name.clone(),
                    rank: c.rank,
                    city: c.city.clone(),
                    visits: schedule
                        .meetings()
                        .filter(|m| m.client_id == c.client_id && m.day_index <= horizon)
                        .map(|m| VisitRef {
                            meeting_id: m.meeting_id.clone(),
                            day_index: m.day_index,
                            slot: m.slot,
                            visit_number: m.visit_number,
                            status: m.status,
                        })
                        .collect(),
                })
                .collect();
            rows.sort_by(|a, b| {
                a.rank
                    .unwrap_or(u8::MAX)
                    .cmp(&b.rank.unwrap_or(u8::MAX))
                    .then_with(|| a.name.cmp(&b.name))
                    .then_with(|| a.client_id.cmp(&b.client_id))
            });
            ViewRows::ByClient(rows)
        }
    };
    Ok(ScheduleView {
        view,
        horizon,
        revision: state.revision,
        generator: schedule.generator,
        stats: schedule.stats,
        days,
        rows,
    })
}

/// Tentative meetings still awaiting a response, in calendar order.
pub fn pending_meetings(state: &EngineState) -> Result<Vec<DateRow>, EngineError> {
    let schedule = state.active_schedule.as_ref().ok_or(EngineError::NotGenerated)?;
    Ok(date_rows(state, schedule, u32::MAX)
        .filter(|r| r.status == MeetingStatus::Tentative)
        .filter(|r| {
            state
                .ledger
                .get(&r.client_id, r.visit_number)
                .is_none_or(|e| e.status == CandidateStatus::Pending)
        })
        .collect())
}

/// State plus config, optionally persisted to a snapshot directory.
#[derive(Debug, Clone)]
pub struct Engine {
    state: EngineState,
    config: EngineConfig,
    store: Option<SnapshotStore>,
}

impl Engine {
    pub fn in_memory(config: EngineConfig) -> Self {
        Self { state: EngineState::default(), config, store: None }
    }

    /// Opens `data_dir`, resuming from its newest snapshot if there is one.
    pub fn open(data_dir: &Path, config: EngineConfig) -> Result<Self, EngineError> {
        let store = SnapshotStore::open(data_dir, config.snapshot_retention)?;
        let state = store.load_latest()?.unwrap_or_default();
        Ok(Self { state, config, store: Some(store) })
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> Option<&SnapshotStore> {
        self.store.as_ref()
    }

    pub fn apply(&mut self, mutation: Mutation) -> Result<Applied, EngineError> {
        let (next, applied) = apply(&self.state, mutation, &self.config)?;
        if let Some(store) = &self.store {
            store.save(&next)?;
        }
        self.state = next;
        Ok(applied)
    }

    /// Installs an already committed state, persisting it first.
    pub fn replace_state(&mut self, state: EngineState) -> Result<(), EngineError> {
        if let Some(store) = &self.store {
            store.save(&state)?;
        }
        self.state = state;
        Ok(())
    }
}
