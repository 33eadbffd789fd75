//! Meeting confirmation state and denial-driven regeneration.
//!
//! Every `(client, visit)` candidate moves `pending -> confirmed` or
//! `pending -> denied` exactly once. A denial freezes the schedule before the
//! denied meeting's day and rebuilds everything from that day on.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{meeting_id, CityGroup, Client, MeetingStatus, Schedule, ScheduleParameters};
use crate::optimizer::{self, FitnessWeights, GaParams};
use crate::scheduler::{self, compare_city_priority, Planner, PlanningInput, SchedulerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Pending,
    Confirmed,
    Denied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Confirmed,
    Denied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub client_id: String,
    pub visit_number: u32,
    pub status: CandidateStatus,
    pub responded_on_day: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfirmationError {
    #[error("no meeting candidate {client_id} visit {visit_number}")]
    UnknownCandidate { client_id: String, visit_number: u32 },
    #[error("candidate {client_id} visit {visit_number} already {status:?}")]
    IllegalTransition { client_id: String, visit_number: u32, status: CandidateStatus },
}

/// Candidate states keyed by meeting id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConfirmationLedger {
    entries: BTreeMap<String, LedgerEntry>,
}

impl ConfirmationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, client_id: &str, visit_number: u32) -> Option<&LedgerEntry> {
        self.entries.get(&meeting_id(client_id, visit_number))
    }

    pub fn status(&self, client_id: &str, visit_number: u32) -> Option<CandidateStatus> {
        self.get(client_id, visit_number).map(|e| e.status)
    }

    pub fn is_confirmed(&self, client_id: &str, visit_number: u32) -> bool {
        self.status(client_id, visit_number) == Some(CandidateStatus::Confirmed)
    }

    /// Clients with at least one denied candidate.
    pub fn denied_clients(&self) -> HashSet<&str> {
        self.entries
            .values()
            .filter(|e| e.status == CandidateStatus::Denied)
            .map(|e| e.client_id.as_str())
            .collect()
    }

    pub fn is_denied(&self, client_id: &str) -> bool {
        self.entries
            .values()
            .any(|e| e.client_id == client_id && e.status == CandidateStatus::Denied)
    }

    /// Adds a pending candidate unless one already exists.
    pub fn ensure_pending(&mut self, client_id: &str, visit_number: u32) -> bool {
        let key = meeting_id(client_id, visit_number);
        if self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(
            key,
            LedgerEntry {
                client_id: client_id.to_string(),
                visit_number,
                status: CandidateStatus::Pending,
                responded_on_day: None,
            },
        );
        true
    }

    /// Registers a pending candidate for every scheduled meeting lacking one.
    pub fn register_schedule(&mut self, schedule: &Schedule) {
        for m in schedule.meetings() {
            self.ensure_pending(&m.client_id, m.visit_number);
        }
    }

    fn terminal_count(&self) -> usize {
        self.entries.values().filter(|e| e.status != CandidateStatus::Pending).count()
    }
}

pub fn record_response(
    ledger: &ConfirmationLedger,
    client_id: &str,
    visit_number: u32,
    response: Response,
    day: u32,
) -> Result<ConfirmationLedger, ConfirmationError> {
    let key = meeting_id(client_id, visit_number);
    let Some(entry) = ledger.entries.get(&key) else {
        return Err(ConfirmationError::UnknownCandidate {
            client_id: client_id.to_string(),
            visit_number,
        });
    };
    if entry.status != CandidateStatus::Pending {
        return Err(ConfirmationError::IllegalTransition {
            client_id: client_id.to_string(),
            visit_number,
            status: entry.status,
        });
    }
    let mut next = ledger.clone();
    let entry = next.entries.get_mut(&key).expect("entry checked above");
    entry.status = match response {
        Response::Confirmed => CandidateStatus::Confirmed,
        Response::Denied => CandidateStatus::Denied,
    };
    entry.responded_on_day = Some(day);
    debug_assert!(next.terminal_count() == ledger.terminal_count() + 1);
    Ok(next)
}

/// Applies the ledger's confirmations to the statuses of scheduled meetings.
pub fn sync_statuses(schedule: &mut Schedule, ledger: &ConfirmationLedger) {
    for day in &mut schedule.days {
        for m in &mut day.meetings {
            if m.status == MeetingStatus::Tentative && ledger.is_confirmed(&m.client_id, m.visit_number) {
                m.status = MeetingStatus::Confirmed;
            }
        }
    }
}

fn is_unconfirmed_top(client: &Client, ledger: &ConfirmationLedger, params: &ScheduleParameters) -> bool {
    client.rank == Some(1)
        && (1..=params.max_visits(1)).any(|v| !ledger.is_confirmed(&client.client_id, v))
}

/// Orders cities by how many rank-1 clients still await confirmation there.
///
/// `groups` describe remaining demand; empty groups are dropped. Ties use the
/// regular city priority comparator.
pub fn reorder_unconfirmed(
    groups: &[CityGroup],
    clients: &[Client],
    ledger: &ConfirmationLedger,
    params: &ScheduleParameters,
) -> Vec<String> {
    let denied = ledger.denied_clients();
    let mut unconfirmed: BTreeMap<&str, u32> = BTreeMap::new();
    for c in clients {
        if !denied.contains(c.client_id.as_str()) && is_unconfirmed_top(c, ledger, params) {
            *unconfirmed.entry(c.city.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<&CityGroup> = groups.iter().filter(|g| g.total_clients() > 0).collect();
    kept.sort_by(|a, b| {
        let ua = unconfirmed.get(a.city.as_str()).copied().unwrap_or(0);
        let ub = unconfirmed.get(b.city.as_str()).copied().unwrap_or(0);
        ub.cmp(&ua).then_with(|| compare_city_priority(a, b))
    });
    kept.into_iter().map(|g| g.city.clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegenerationStrategy {
    Greedy,
    Ga { ga: GaParams, weights: FitnessWeights },
}

/// Summary of what a regeneration changed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegenerationSummary {
    pub denial_day: u32,
    pub first_changed_day: Option<u32>,
    pub meetings_moved: Vec<String>,
    pub meetings_dropped: Vec<String>,
    pub meetings_added: Vec<String>,
}

/// Rebuilds `schedule` from `denial_day` onward; earlier days are kept verbatim.
#[allow(clippy::too_many_arguments)]
pub fn regenerate_from(
    schedule: &Schedule,
    clients: &[Client],
    params: &ScheduleParameters,
    ledger: &ConfirmationLedger,
    denial_day: u32,
    seed: u64,
    strategy: &RegenerationStrategy,
) -> Result<Schedule, SchedulerError> {
    if denial_day == 0 || denial_day > params.horizon_days || schedule.days.len() < denial_day as usize - 1 {
        return Err(SchedulerError::DayOutOfRange(denial_day));
    }
    let prefix = &schedule.days[..denial_day as usize - 1];
    let input = PlanningInput {
        clients,
        params,
        ledger,
        start_day: denial_day,
        frozen_prefix: prefix,
        seed,
    };
    let planner = Planner::new(&input)?;
    let order = reorder_unconfirmed(&planner.demand_groups(), &planner.demand_clients(), ledger, params);
    let greedy = planner.chromosome_for_order(&order);
    let mut result = match strategy {
        RegenerationStrategy::Greedy => planner.materialize(&planner.decode(&greedy)?, crate::domain::Generator::Greedy),
        RegenerationStrategy::Ga { ga, weights } => {
            optimizer::evolve_with_planner(&planner, greedy, &[], weights, ga)?.schedule
        }
    };
    result.seed = seed;
    Ok(result)
}

/// Compares two schedules meeting by meeting.
pub fn summarize_changes(before: &Schedule, after: &Schedule, denial_day: u32) -> RegenerationSummary {
    let first_changed_day = before
        .days
        .iter()
        .zip(&after.days)
        .find(|(a, b)| a != b)
        .map(|(a, _)| a.day_index);
    let old: BTreeMap<&str, (u32, crate::domain::Slot)> = before
        .meetings()
        .map(|m| (m.meeting_id.as_str(), (m.day_index, m.slot)))
        .collect();
    let new: BTreeMap<&str, (u32, crate::domain::Slot)> = after
        .meetings()
        .map(|m| (m.meeting_id.as_str(), (m.day_index, m.slot)))
        .collect();
    let mut summary = RegenerationSummary {
        denial_day,
        first_changed_day,
        meetings_moved: Vec::new(),
        meetings_dropped: Vec::new(),
        meetings_added: Vec::new(),
    };
    for (id, at) in &old {
        match new.get(id) {
            None => summary.meetings_dropped.push(id.to_string()),
            Some(now) if now != at => summary.meetings_moved.push(id.to_string()),
            _ => {}
        }
    }
    for id in new.keys() {
        if !old.contains_key(id) {
            summary.meetings_added.push(id.to_string());
        }
    }
    summary
}

/// Orders two clients for reconfirmation: better rank first, then larger TEU.
pub fn reconfirmation_order(a: &Client, b: &Client) -> Ordering {
    scheduler::compare_client_priority(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DayKind, Generator, RankTable};
    use crate::scheduler::generate_greedy_schedule;

    fn ledger_with(entries: &[(&str, u32)]) -> ConfirmationLedger {
        let mut l = ConfirmationLedger::new();
        for (c, v) in entries {
            l.ensure_pending(c, *v);
        }
        l
    }

    #[test]
    fn confirm_pending() {
        let l = ledger_with(&[("A", 1)]);
        let next = record_response(&l, "A", 1, Response::Confirmed, 3).unwrap();
        let e = next.get("A", 1).unwrap();
        assert_eq!(e.status, CandidateStatus::Confirmed);
        assert_eq!(e.responded_on_day, Some(3));
        assert_eq!(l.status("A", 1), Some(CandidateStatus::Pending));
    }

    #[test]
    fn terminal_states_are_final() {
        let l = ledger_with(&[("A", 1)]);
        let l = record_response(&l, "A", 1, Response::Confirmed, 3).unwrap();
        let err = record_response(&l, "A", 1, Response::Denied, 4).unwrap_err();
        assert!(matches!(err, ConfirmationError::IllegalTransition { .. }));
    }

    #[test]
    fn unknown_candidate() {
        let err = record_response(&ConfirmationLedger::new(), "Z", 1, Response::Denied, 1).unwrap_err();
        assert!(matches!(err, ConfirmationError::UnknownCandidate { .. }));
    }

    fn group(city: &str, counts: [u32; 5]) -> CityGroup {
        CityGroup { city: city.into(), counts_by_rank: RankTable(counts), total_teu: 0 }
    }

    fn clients_for(city: &str, rank: u8, n: usize) -> Vec<Client> {
        (0..n).map(|i| Client::new(format!("{city}{rank}-{i}"), city, Some(rank), 1000)).collect()
    }

    #[test]
    fn more_unconfirmed_top_clients_first() {
        let mut clients = clients_for("A", 1, 2);
        clients.extend(clients_for("B", 1, 1));
        let groups = [group("B", [1, 0, 0, 0, 0]), group("A", [2, 0, 0, 0, 0])];
        let order = reorder_unconfirmed(&groups, &clients, &ConfirmationLedger::new(), &ScheduleParameters::default());
        assert_eq!(order, vec!["A", "B"]);
    }

    #[test]
    fn cities_without_demand_are_dropped() {
        let clients = clients_for("B", 4, 1);
        let groups = [group("A", [0, 0, 0, 0, 0]), group("B", [0, 0, 0, 1, 0])];
        let order = reorder_unconfirmed(&groups, &clients, &ConfirmationLedger::new(), &ScheduleParameters::default());
        assert_eq!(order, vec!["B"]);
    }

    #[test]
    fn unconfirmed_rank_one_beats_rank_two_mass() {
        // Exhaustive check of both orderings on the two-city instance.
        let mut clients = clients_for("A", 1, 1);
        clients.extend(clients_for("B", 2, 3));
        let groups = [group("B", [0, 3, 0, 0, 0]), group("A", [1, 0, 0, 0, 0])];
        let params = ScheduleParameters::default();
        let ledger = ConfirmationLedger::new();
        let order = reorder_unconfirmed(&groups, &clients, &ledger, &params);
        let key = |city: &str| clients.iter().filter(|c| c.city == city && c.rank == Some(1)).count();
        let candidates = [vec!["A", "B"], vec!["B", "A"]];
        let best = candidates.iter().find(|o| key(o[0]) >= key(o[1])).unwrap();
        assert_eq!(order, *best);
    }

    #[test]
    fn confirmed_top_clients_stop_counting() {
        let mut clients = clients_for("A", 1, 2);
        clients.extend(clients_for("B", 1, 1));
        let mut ledger = ConfirmationLedger::new();
        for c in clients.iter().filter(|c| c.city == "A") {
            for v in 1..=2 {
                ledger.ensure_pending(&c.client_id, v);
                ledger = record_response(&ledger, &c.client_id, v, Response::Confirmed, 1).unwrap();
            }
        }
        let groups = [group("A", [2, 0, 0, 0, 0]), group("B", [1, 0, 0, 0, 0])];
        let order = reorder_unconfirmed(&groups, &clients, &ledger, &ScheduleParameters::default());
        assert_eq!(order, vec!["B", "A"]);
    }

    fn three_city_roster() -> Vec<Client> {
        let mut clients = clients_for("A", 1, 3);
        clients.extend(clients_for("B", 2, 2));
        clients.extend(clients_for("C", 3, 2));
        clients
    }

    #[test]
    fn denial_keeps_prefix_and_removes_client() {
        let clients = three_city_roster();
        let params = ScheduleParameters::default();
        let mut ledger = ConfirmationLedger::new();
        let schedule = generate_greedy_schedule(&PlanningInput::fresh(&clients, &params, &ledger, 1)).unwrap();
        ledger.register_schedule(&schedule);
        let target = schedule.meetings().find(|m| m.day_index >= 3).unwrap().clone();
        let ledger = record_response(&ledger, &target.client_id, target.visit_number, Response::Denied, target.day_index).unwrap();
        let regen = regenerate_from(&schedule, &clients, &params, &ledger, target.day_index, 1, &RegenerationStrategy::Greedy).unwrap();
        let k = target.day_index as usize - 1;
        assert_eq!(schedule.days[..k], regen.days[..k]);
        assert!(regen.days[k..].iter().flat_map(|d| &d.meetings).all(|m| m.client_id != target.client_id));
        regen.check(&clients, &params).unwrap();
        let summary = summarize_changes(&schedule, &regen, target.day_index);
        assert!(summary.first_changed_day.unwrap() >= target.day_index);
        assert!(summary.meetings_dropped.contains(&target.meeting_id));
    }

    #[test]
    fn denying_the_only_client_idles_the_suffix() {
        let clients = clients_for("A", 2, 1);
        let params = ScheduleParameters::default();
        let mut ledger = ConfirmationLedger::new();
        let schedule = generate_greedy_schedule(&PlanningInput::fresh(&clients, &params, &ledger, 1)).unwrap();
        ledger.register_schedule(&schedule);
        let ledger = record_response(&ledger, &clients[0].client_id, 1, Response::Denied, 1).unwrap();
        let regen = regenerate_from(&schedule, &clients, &params, &ledger, 1, 1, &RegenerationStrategy::Greedy).unwrap();
        assert!(regen.days.iter().all(|d| d.kind == DayKind::Idle));
        assert_eq!(regen.stats.idle, 180);
        assert_eq!(regen.generator, Generator::Greedy);
    }

    #[test]
    fn denial_resumes_in_same_city_with_unconfirmed_top_clients() {
        let clients = three_city_roster();
        let params = ScheduleParameters::default();
        let mut ledger = ConfirmationLedger::new();
        let schedule = generate_greedy_schedule(&PlanningInput::fresh(&clients, &params, &ledger, 1)).unwrap();
        ledger.register_schedule(&schedule);
        // Day 1 holds two of A's rank-1 clients; deny the first.
        let first = schedule.days[0].meetings[0].clone();
        assert_eq!(schedule.days[0].city(), Some("A"));
        let ledger = record_response(&ledger, &first.client_id, 1, Response::Denied, 1).unwrap();
        let regen = regenerate_from(&schedule, &clients, &params, &ledger, 1, 1, &RegenerationStrategy::Greedy).unwrap();
        assert_eq!(regen.days[0].city(), Some("A"));
        let planner_order = regen.city_order();
        assert_eq!(planner_order[0], "A");
    }

    #[test]
    fn sync_marks_confirmed() {
        let clients = clients_for("A", 2, 1);
        let params = ScheduleParameters::default();
        let mut ledger = ConfirmationLedger::new();
        let mut schedule = generate_greedy_schedule(&PlanningInput::fresh(&clients, &params, &ledger, 1)).unwrap();
        ledger.register_schedule(&schedule);
        let ledger = record_response(&ledger, &clients[0].client_id, 1, Response::Confirmed, 1).unwrap();
        sync_statuses(&mut schedule, &ledger);
        assert_eq!(schedule.days[0].meetings[0].status, MeetingStatus::Confirmed);
    }
}
