//! Case memory of past scheduling episodes: retrieve, reuse, revise, retain.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Client, RankTable, RosterStats, Schedule, ScheduleParameters};
use crate::scheduler::{city_priority_order, group_clients_by_city, SchedulerError};

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CasebookError {
    #[error("case {0} has no outcome; revise it before retaining")]
    NotEvaluated(String),
    #[error("case id {0} already exists")]
    DuplicateId(String),
    #[error("case {0} failed and is not reused")]
    FailedCase(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CaseDescriptor {
    pub num_clients: u32,
    pub rank_histogram: RankTable<u32>,
    pub num_cities: u32,
    pub horizon_days: u32,
}

impl CaseDescriptor {
    /// Describes a ranked roster; unranked clients are not counted.
    pub fn from_roster(clients: &[Client], params: &ScheduleParameters) -> Self {
        let stats = RosterStats::from_clients(clients);
        Self {
            num_clients: stats.num_clients - stats.unranked,
            rank_histogram: stats.rank_histogram,
            num_cities: stats.num_cities,
            horizon_days: params.horizon_days,
        }
    }

    pub fn validate(&self) -> Result<(), CasebookError> {
        let sum: u32 = self.rank_histogram.0.iter().sum();
        if sum != self.num_clients {
            return Err(CasebookError::InvalidDescriptor(format!(
                "rank histogram sums to {sum}, num_clients is {}",
                self.num_clients
            )));
        }
        Ok(())
    }

    pub fn index_key(&self) -> String {
        let h = self.rank_histogram.0;
        format!(
            "n{}-r{}.{}.{}.{}.{}-c{}-h{}",
            self.num_clients, h[0], h[1], h[2], h[3], h[4], self.num_cities, self.horizon_days
        )
    }

    fn dimensions(&self) -> [u32; 7] {
        let h = self.rank_histogram.0;
        [self.num_clients, h[0], h[1], h[2], h[3], h[4], self.num_cities]
    }
}

/// One minus the summed per-dimension relative distance, floored at zero.
pub fn similarity(a: &CaseDescriptor, b: &CaseDescriptor) -> f64 {
    let distance: f64 = a
        .dimensions()
        .iter()
        .zip(b.dimensions())
        .map(|(&x, y)| {
            let m = x.max(y);
            if m == 0 {
                0.0
            } else {
                x.abs_diff(y) as f64 / m as f64
            }
        })
        .sum();
    (1.0 - distance).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Repaired,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub case_id: String,
    pub descriptor: CaseDescriptor,
    pub schedule: Schedule,
    pub outcome: Option<Outcome>,
    #[serde(default)]
    pub notes: String,
    pub index_key: String,
}

impl Case {
    /// An unevaluated case; ids are assigned on retention.
    pub fn new(descriptor: CaseDescriptor, schedule: Schedule) -> Self {
        Self {
            case_id: String::new(),
            index_key: descriptor.index_key(),
            descriptor,
            schedule,
            outcome: None,
            notes: String::new(),
        }
    }

    pub fn with_outcome(mut self, outcome: Outcome, notes: impl Into<String>) -> Self {
        self.outcome = Some(outcome);
        self.notes = notes.into();
        self
    }
}

/// Append-only list of retained cases, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CaseBase {
    cases: Vec<Case>,
    next_id: u64,
}

impl CaseBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, case_id: &str) -> Option<&Case> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }
}

fn best_match<'a>(
    cases: impl Iterator<Item = &'a Case>,
    query: &CaseDescriptor,
    threshold: f64,
) -> Option<(&'a Case, f64)> {
    let mut best: Option<(&Case, f64)> = None;
    for case in cases {
        let s = similarity(query, &case.descriptor);
        // Later cases are more recent, so ties go to them.
        if best.is_none_or(|(_, b)| s >= b) {
            best = Some((case, s));
        }
    }
    best.filter(|(_, s)| *s >= threshold)
}

/// Best matching case at or above `threshold`, failed cases included.
pub fn retrieve<'a>(base: &'a CaseBase, query: &CaseDescriptor, threshold: f64) -> Option<(&'a Case, f64)> {
    best_match(base.cases.iter(), query, threshold)
}

/// Like [`retrieve`] but skips failed cases, which are never reused.
pub fn retrieve_reusable<'a>(
    base: &'a CaseBase,
    query: &CaseDescriptor,
    threshold: f64,
) -> Option<(&'a Case, f64)> {
    best_match(base.cases.iter().filter(|c| c.outcome != Some(Outcome::Failed)), query, threshold)
}

/// City order to seed a new search: the case's cities that are still in the
/// roster keep their order, new cities follow in priority order.
pub fn reuse(case: &Case, clients: &[Client]) -> Result<Vec<String>, CasebookError> {
    if case.outcome == Some(Outcome::Failed) {
        return Err(CasebookError::FailedCase(case.case_id.clone()));
    }
    let groups = group_clients_by_city(clients)?;
    let present: BTreeSet<&str> = groups.iter().map(|g| g.city.as_str()).collect();
    let mut order: Vec<String> = case
        .schedule
        .city_order()
        .into_iter()
        .filter(|c| present.contains(c.as_str()))
        .collect();
    for city in city_priority_order(&groups) {
        if !order.contains(&city) {
            order.push(city);
        }
    }
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub met_quotas: bool,
    pub window_ok: bool,
}

impl Evaluation {
    /// Checks mandatory visit counts and rank-1 first visits in the window.
    pub fn of_schedule(schedule: &Schedule, clients: &[Client], params: &ScheduleParameters) -> Self {
        let mut met_quotas = true;
        let mut window_ok = true;
        for c in clients {
            let Some(rank) = c.rank else { continue };
            let visits: Vec<_> = schedule.meetings().filter(|m| m.client_id == c.client_id).collect();
            if (visits.len() as u32) < params.mandatory_visits(rank) {
                met_quotas = false;
            }
            if rank == 1 && params.mandatory_visits(1) > 0 {
                let in_window = visits
                    .iter()
                    .any(|m| m.visit_number == 1 && m.day_index <= params.first_window_days);
                window_ok &= in_window;
            }
        }
        Self { met_quotas, window_ok }
    }
}

pub fn revise(case: &Case, evaluation: Evaluation, repair_notes: &str) -> Case {
    let outcome = if evaluation.met_quotas && evaluation.window_ok {
        Outcome::Success
    } else {
        Outcome::Repaired
    };
    case.clone().with_outcome(outcome, repair_notes)
}

/// Problems with a case that do not block retention.
pub fn validate_case(case: &Case) -> Vec<String> {
    let mut issues = Vec::new();
    if let Err(e) = case.descriptor.validate() {
        issues.push(e.to_string());
    }
    if case.outcome == Some(Outcome::Repaired) && case.notes.trim().is_empty() {
        issues.push("repaired case needs repair notes".to_string());
    }
    issues
}

pub fn retain(base: &CaseBase, case: Case) -> Result<CaseBase, CasebookError> {
    if case.outcome.is_none() {
        return Err(CasebookError::NotEvaluated(case.case_id));
    }
    case.descriptor.validate()?;
    let mut next = base.clone();
    let mut case = case;
    if case.case_id.is_empty() {
        loop {
            next.next_id += 1;
            let id = format!("case-{:04}", next.next_id);
            if next.get(&id).is_none() {
                case.case_id = id;
                break;
            }
        }
    } else if next.get(&case.case_id).is_some() {
        return Err(CasebookError::DuplicateId(case.case_id));
    }
    case.index_key = format!("{}#{}", case.descriptor.index_key(), next.cases.len() + 1);
    next.cases.push(case);
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DayPlan, Generator, ScheduleStats};
    use proptest::prelude::*;

    fn descriptor(n: u32, hist: [u32; 5], cities: u32) -> CaseDescriptor {
        CaseDescriptor { num_clients: n, rank_histogram: RankTable(hist), num_cities: cities, horizon_days: 180 }
    }

    fn schedule_over(cities: &[&str]) -> Schedule {
        let mut days = Vec::new();
        for (i, c) in cities.iter().enumerate() {
            if i > 0 {
                days.push(DayPlan::travel(days.len() as u32 + 1, cities[i - 1], c));
            }
            days.push(DayPlan {
                day_index: days.len() as u32 + 1,
                kind: crate::domain::DayKind::Visiting { city: c.to_string() },
                meetings: Vec::new(),
            });
        }
        let stats = ScheduleStats::from_days(&days, 2);
        Schedule { days, stats, seed: 0, generator: Generator::Greedy }
    }

    fn evaluated(d: CaseDescriptor) -> Case {
        Case::new(d, schedule_over(&[])).with_outcome(Outcome::Success, "")
    }

    #[test]
    fn empty_base_has_no_match() {
        assert!(retrieve(&CaseBase::new(), &descriptor(1, [1, 0, 0, 0, 0], 1), 0.6).is_none());
    }

    #[test]
    fn identical_descriptor_matches_fully() {
        let d = descriptor(10, [2, 8, 0, 0, 0], 3);
        let base = retain(&CaseBase::new(), evaluated(d)).unwrap();
        let (case, s) = retrieve(&base, &d, 0.6).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(case.case_id, "case-0001");
    }

    #[test]
    fn doubled_descriptor_hand_evaluation() {
        let q = descriptor(10, [2, 8, 0, 0, 0], 3);
        let c = descriptor(20, [4, 16, 0, 0, 0], 6);
        // Clients, rank 1, rank 2 and cities each differ by half; empty ranks add nothing.
        let distance = (20.0 - 10.0) / 20.0 + (4.0 - 2.0) / 4.0 + (16.0 - 8.0) / 16.0 + (6.0 - 3.0) / 6.0;
        assert_eq!(distance, 2.0);
        assert_eq!(similarity(&q, &c), 0.0);
        let base = retain(&CaseBase::new(), evaluated(c)).unwrap();
        assert!(retrieve(&base, &q, DEFAULT_SIMILARITY_THRESHOLD).is_none());
    }

    #[test]
    fn reuse_keeps_stored_order() {
        let roster = vec![
            Client::new("a", "A", Some(2), 1),
            Client::new("b", "B", Some(1), 1),
        ];
        let case = evaluated(descriptor(2, [1, 1, 0, 0, 0], 2));
        let case = Case { schedule: schedule_over(&["A", "B"]), ..case };
        assert_eq!(reuse(&case, &roster).unwrap(), vec!["A", "B"]);
        let mut bigger = roster.clone();
        bigger.push(Client::new("c", "C", Some(3), 1));
        assert_eq!(reuse(&case, &bigger).unwrap(), vec!["A", "B", "C"]);
    }

    #[test]
    fn reuse_filters_missing_cities() {
        let case = Case { schedule: schedule_over(&["A", "B", "C"]), ..evaluated(descriptor(0, [0; 5], 0)) };
        let roster = vec![Client::new("c", "C", Some(1), 1), Client::new("a", "A", Some(5), 1)];
        let order = reuse(&case, &roster).unwrap();
        assert_eq!(order, vec!["A", "C"]);
        let stored = case.schedule.city_order();
        let pos: Vec<usize> = order.iter().map(|c| stored.iter().position(|s| s == c).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn failed_cases_are_not_reused() {
        let case = Case::new(descriptor(0, [0; 5], 0), schedule_over(&[])).with_outcome(Outcome::Failed, "overflow");
        assert!(matches!(reuse(&case, &[]), Err(CasebookError::FailedCase(_))));
        let base = retain(&CaseBase::new(), case.clone()).unwrap();
        assert!(retrieve(&base, &case.descriptor, 0.6).is_some());
        assert!(retrieve_reusable(&base, &case.descriptor, 0.6).is_none());
    }

    #[test]
    fn revise_outcomes() {
        let case = Case::new(descriptor(0, [0; 5], 0), schedule_over(&[]));
        let ok = revise(&case, Evaluation { met_quotas: true, window_ok: true }, "");
        assert_eq!(ok.outcome, Some(Outcome::Success));
        let fixed = revise(&case, Evaluation { met_quotas: false, window_ok: true }, "dropped rank-5 visits");
        assert_eq!(fixed.outcome, Some(Outcome::Repaired));
        assert_eq!(fixed.notes, "dropped rank-5 visits");
        assert_eq!(fixed.schedule, case.schedule);
        let bare = revise(&case, Evaluation { met_quotas: false, window_ok: false }, "");
        assert_eq!(bare.outcome, Some(Outcome::Repaired));
        assert_eq!(validate_case(&bare), vec!["repaired case needs repair notes".to_string()]);
    }

    #[test]
    fn unevaluated_case_is_refused() {
        let case = Case::new(descriptor(0, [0; 5], 0), schedule_over(&[]));
        assert!(matches!(retain(&CaseBase::new(), case), Err(CasebookError::NotEvaluated(_))));
    }

    #[test]
    fn equidistant_tie_goes_to_latest() {
        let q = descriptor(10, [0, 10, 0, 0, 0], 2);
        // One city fewer and one city more sit at the same distance.
        let a = descriptor(10, [0, 10, 0, 0, 0], 1);
        let b = descriptor(10, [0, 10, 0, 0, 0], 4);
        assert_eq!(similarity(&q, &a), similarity(&q, &b));
        let base = retain(&CaseBase::new(), evaluated(a)).unwrap();
        let base = retain(&base, evaluated(b)).unwrap();
        let (case, _) = retrieve(&base, &q, 0.0).unwrap();
        assert_eq!(case.case_id, "case-0002");
    }

    fn arb_descriptor() -> impl Strategy<Value = CaseDescriptor> {
        (prop::array::uniform5(0u32..40), 0u32..12).prop_map(|(h, c)| descriptor(h.iter().sum(), h, c))
    }

    proptest! {
        #[test]
        fn similarity_is_bounded_and_symmetric(a in arb_descriptor(), b in arb_descriptor()) {
            let s = similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, similarity(&b, &a));
        }

        #[test]
        fn retain_then_retrieve_round_trips(ds in prop::collection::vec(arb_descriptor(), 1..6)) {
            let mut base = CaseBase::new();
            for d in &ds {
                base = retain(&base, evaluated(*d)).unwrap();
            }
            let last = ds.last().unwrap();
            let (case, s) = retrieve(&base, last, 0.6).unwrap();
            prop_assert_eq!(s, 1.0);
            prop_assert_eq!(&case.descriptor, last);
            let ids: BTreeSet<&str> = base.cases().iter().map(|c| c.case_id.as_str()).collect();
            prop_assert_eq!(ids.len(), base.len());
        }
    }
}
