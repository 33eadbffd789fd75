//! Roster and schedule entities.
//!
//! Everything here is a plain value type. Other modules build on these
//! types and never mutate them in place behind the caller's back.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_RANK: u8 = 1;
pub const MAX_RANK: u8 = 5;

/// Returns true when `rank` is a legal client rank.
pub fn is_valid_rank(rank: u8) -> bool {
    (MIN_RANK..=MAX_RANK).contains(&rank)
}

/// A value per rank, indexed by rank 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct RankTable<T>(pub [T; 5]);

impl<T: Copy> RankTable<T> {
    /// Panics when `rank` is outside 1..=5.
    pub fn get(&self, rank: u8) -> T {
        self.0[usize::from(rank - 1)]
    }

    pub fn set(&mut self, rank: u8, value: T) {
        self.0[usize::from(rank - 1)] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (u8, T)> + '_ {
        self.0.iter().enumerate().map(|(i, v)| (i as u8 + 1, *v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Client {
    pub client_id: String,
    pub name: String,
    pub country: String,
    pub city: String,
    /// `None` until the client has been rated.
    pub rank: Option<u8>,
    pub teu: u64,
    #[serde(default)]
    pub terminal_ids: Vec<String>,
}

impl Client {
    pub fn new(
        client_id: impl Into<String>,
        city: impl Into<String>,
        rank: Option<u8>,
        teu: u64,
    ) -> Self {
        let client_id = client_id.into();
        Self {
            name: client_id.clone(),
            client_id,
            country: "NL".to_string(),
            city: city.into(),
            rank,
            teu,
            terminal_ids: Vec::new(),
        }
    }

    pub fn with_country(mut self, country: impl Into<String>) -> Self {
        self.country = country.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Terminal {
    pub terminal_id: String,
    pub name: String,
    pub owner_client_id: String,
    pub city: String,
    pub country: String,
    pub teu: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Visitor {
    pub visitor_id: String,
    pub name: String,
    pub home_city: String,
    #[serde(default)]
    pub interest_countries: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParameterError {
    #[error("first window must satisfy 0 < first_window_days <= horizon_days (got {window} of {horizon})")]
    Window { window: u32, horizon: u32 },
    #[error("meetings_per_visiting_day must be at least 1")]
    Capacity,
}

/// Horizon, window and frequency settings shared by every planner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParameters {
    pub horizon_days: u32,
    pub first_window_days: u32,
    pub meetings_per_visiting_day: u32,
    /// Mandatory visits per year for each rank.
    pub visits_per_rank: RankTable<u32>,
    /// Visits granted to ranks with no mandate, only when capacity remains.
    pub best_effort_visits: u32,
}

impl Default for ScheduleParameters {
    fn default() -> Self {
        Self {
            horizon_days: 180,
            first_window_days: 90,
            meetings_per_visiting_day: 2,
            visits_per_rank: RankTable([2, 1, 1, 0, 0]),
            best_effort_visits: 1,
        }
    }
}

impl ScheduleParameters {
    pub fn validate(&self) -> Result<(), ParameterError> {
        if self.first_window_days == 0 || self.first_window_days > self.horizon_days {
            return Err(ParameterError::Window {
                window: self.first_window_days,
                horizon: self.horizon_days,
            });
        }
        if self.meetings_per_visiting_day == 0 {
            return Err(ParameterError::Capacity);
        }
        Ok(())
    }

    pub fn mandatory_visits(&self, rank: u8) -> u32 {
        self.visits_per_rank.get(rank)
    }

    /// Upper bound on visits a client of `rank` may receive.
    pub fn max_visits(&self, rank: u8) -> u32 {
        match self.mandatory_visits(rank) {
            0 => self.best_effort_visits,
            n => n,
        }
    }

    /// Total half-day slots in the horizon.
    pub fn half_days(&self) -> u32 {
        self.horizon_days * self.meetings_per_visiting_day
    }
}

/// Per-city client counts by rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CityGroup {
    pub city: String,
    pub counts_by_rank: RankTable<u32>,
    pub total_teu: u64,
}

impl CityGroup {
    pub fn total_clients(&self) -> u32 {
        self.counts_by_rank.0.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Am,
    Pm,
}

impl Slot {
    pub fn from_index(i: usize) -> Slot {
        if i == 0 {
            Slot::Am
        } else {
            Slot::Pm
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slot::Am => "AM",
            Slot::Pm => "PM",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeetingStatus {
    Tentative,
    Confirmed,
    Denied,
}

impl fmt::Display for MeetingStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MeetingStatus::Tentative => "tentative",
            MeetingStatus::Confirmed => "confirmed",
            MeetingStatus::Denied => "denied",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meeting {
    pub meeting_id: String,
    pub client_id: String,
    pub day_index: u32,
    pub slot: Slot,
    pub visit_number: u32,
    pub status: MeetingStatus,
}

/// Stable meeting id for a client's n-th visit.
pub fn meeting_id(client_id: &str, visit_number: u32) -> String {
    format!("{client_id}.v{visit_number}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DayKind {
    Visiting { city: String },
    Travel { from_city: String, to_city: String },
    Idle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayPlan {
    pub day_index: u32,
    #[serde(flatten)]
    pub kind: DayKind,
    #[serde(default)]
    pub meetings: Vec<Meeting>,
}

impl DayPlan {
    pub fn idle(day_index: u32) -> Self {
        Self { day_index, kind: DayKind::Idle, meetings: Vec::new() }
    }

    pub fn travel(day_index: u32, from: &str, to: &str) -> Self {
        Self {
            day_index,
            kind: DayKind::Travel { from_city: from.to_string(), to_city: to.to_string() },
            meetings: Vec::new(),
        }
    }

    pub fn is_visiting(&self) -> bool {
        matches!(self.kind, DayKind::Visiting { .. })
    }

    pub fn city(&self) -> Option<&str> {
        match &self.kind {
            DayKind::Visiting { city } => Some(city),
            _ => None,
        }
    }

    /// Where the visitor is at the end of this day, when the day fixes it.
    pub fn location_after(&self) -> Option<&str> {
        match &self.kind {
            DayKind::Visiting { city } => Some(city),
            DayKind::Travel { to_city, .. } => Some(to_city),
            DayKind::Idle => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ScheduleStats {
    pub tvd: u32,
    pub ttd: u32,
    pub idle: u32,
    pub n_cities: u32,
    /// Unused half-day slots on visiting and idle days.
    pub idle_half_days: u32,
}

impl ScheduleStats {
    pub fn from_days(days: &[DayPlan], meetings_per_day: u32) -> Self {
        let mut stats = ScheduleStats::default();
        let mut cities = HashSet::new();
        for day in days {
            match &day.kind {
                DayKind::Visiting { city } => {
                    stats.tvd += 1;
                    cities.insert(city.as_str());
                    stats.idle_half_days +=
                        meetings_per_day.saturating_sub(day.meetings.len() as u32);
                }
                DayKind::Travel { .. } => stats.ttd += 1,
                DayKind::Idle => {
                    stats.idle += 1;
                    stats.idle_half_days += meetings_per_day;
                }
            }
        }
        stats.n_cities = cities.len() as u32;
        stats
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Greedy,
    Ga,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub days: Vec<DayPlan>,
    pub stats: ScheduleStats,
    pub seed: u64,
    pub generator: Generator,
}

/// A broken hard constraint, with the offending day when there is one.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("day {day}: {reason}")]
pub struct ScheduleViolation {
    pub day: u32,
    pub reason: String,
}

impl Schedule {
    pub fn meetings(&self) -> impl Iterator<Item = &Meeting> {
        self.days.iter().flat_map(|d| d.meetings.iter())
    }

    pub fn find_meeting(&self, meeting_id: &str) -> Option<&Meeting> {
        self.meetings().find(|m| m.meeting_id == meeting_id)
    }

    /// Cities in the order the visitor first works in them.
    pub fn city_order(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut order = Vec::new();
        for day in &self.days {
            if let Some(city) = day.city() {
                if seen.insert(city) {
                    order.push(city.to_string());
                }
            }
        }
        order
    }

    /// True when every city's visiting days form one unbroken run of non-idle days.
    pub fn has_contiguous_city_blocks(&self) -> bool {
        let mut finished: HashSet<&str> = HashSet::new();
        let mut current: Option<&str> = None;
        for day in &self.days {
            match &day.kind {
                DayKind::Visiting { city } => {
                    if current != Some(city.as_str()) {
                        if finished.contains(city.as_str()) {
                            return false;
                        }
                        if let Some(prev) = current {
                            finished.insert(prev);
                        }
                        current = Some(city);
                    }
                }
                DayKind::Travel { .. } => {
                    if let Some(prev) = current.take() {
                        finished.insert(prev);
                    }
                }
                DayKind::Idle => {}
            }
        }
        true
    }

    /// Checks every structural invariant against the roster the schedule was built from.
    pub fn check(
        &self,
        clients: &[Client],
        params: &ScheduleParameters,
    ) -> Result<(), ScheduleViolation> {
        let fail = |day: u32, reason: String| Err(ScheduleViolation { day, reason });
        if self.days.len() != params.horizon_days as usize {
            return fail(
                0,
                format!("expected {} days, found {}", params.horizon_days, self.days.len()),
            );
        }
        let by_id: HashMap<&str, &Client> =
            clients.iter().map(|c| (c.client_id.as_str(), c)).collect();
        let mut location: Option<&str> = None;
        let mut seen_visits: HashSet<(&str, u32)> = HashSet::new();
        for (i, day) in self.days.iter().enumerate() {
            let idx = i as u32 + 1;
            if day.day_index != idx {
                return fail(idx, format!("out of sequence index {}", day.day_index));
            }
            match &day.kind {
                DayKind::Visiting { city } => {
                    if let Some(loc) = location {
                        if loc != city {
                            return fail(idx, format!("visiting {city} while located in {loc}"));
                        }
                    }
                    location = Some(city);
                    if day.meetings.is_empty() {
                        return fail(idx, "visiting day without meetings".into());
                    }
                    if day.meetings.len() > params.meetings_per_visiting_day as usize {
                        return fail(idx, format!("{} meetings exceed capacity", day.meetings.len()));
                    }
                    let mut slots = HashSet::new();
                    let mut day_clients = HashSet::new();
                    for m in &day.meetings {
                        if m.day_index != idx {
                            return fail(idx, format!("meeting {} claims day {}", m.meeting_id, m.day_index));
                        }
                        if !slots.insert(m.slot) {
                            return fail(idx, format!("slot {} used twice", m.slot));
                        }
                        if !day_clients.insert(m.client_id.as_str()) {
                            return fail(idx, format!("client {} met twice", m.client_id));
                        }
                        let Some(client) = by_id.get(m.client_id.as_str()) else {
                            return fail(idx, format!("unknown client {}", m.client_id));
                        };
                        if client.city != *city {
                            return fail(idx, format!("client {} is not in {city}", m.client_id));
                        }
                        if m.visit_number == 0 {
                            return fail(idx, "visit numbers start at 1".into());
                        }
                        if let Some(rank) = client.rank.filter(|r| is_valid_rank(*r)) {
                            if m.visit_number > params.max_visits(rank) {
                                return fail(
                                    idx,
                                    format!("client {} visit {} exceeds quota", m.client_id, m.visit_number),
                                );
                            }
                        }
                        if m.status != MeetingStatus::Denied
                            && !seen_visits.insert((m.client_id.as_str(), m.visit_number))
                        {
                            return fail(
                                idx,
                                format!("client {} visit {} booked twice", m.client_id, m.visit_number),
                            );
                        }
                    }
                }
                DayKind::Travel { from_city, to_city } => {
                    if !day.meetings.is_empty() {
                        return fail(idx, "meetings on a travel day".into());
                    }
                    if from_city == to_city {
                        return fail(idx, format!("travel from {from_city} to itself"));
                    }
                    if let Some(loc) = location {
                        if loc != from_city {
                            return fail(idx, format!("travel departs {from_city} while located in {loc}"));
                        }
                    }
                    location = Some(to_city);
                }
                DayKind::Idle => {
                    if !day.meetings.is_empty() {
                        return fail(idx, "meetings on an idle day".into());
                    }
                }
            }
        }
        let recomputed = ScheduleStats::from_days(&self.days, params.meetings_per_visiting_day);
        if recomputed != self.stats {
            return fail(0, format!("stored stats {:?} differ from days {:?}", self.stats, recomputed));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterStats {
    pub num_clients: u32,
    pub rank_histogram: RankTable<u32>,
    pub unranked: u32,
    pub num_cities: u32,
}

impl RosterStats {
    pub fn from_clients(clients: &[Client]) -> Self {
        let mut rank_histogram = RankTable::default();
        let mut unranked = 0;
        for c in clients {
            match c.rank.filter(|r| is_valid_rank(*r)) {
                Some(r) => rank_histogram.set(r, rank_histogram.get(r) + 1),
                None => unranked += 1,
            }
        }
        let num_cities = clients.iter().map(|c| c.city.as_str()).collect::<BTreeSet<_>>().len();
        Self {
            num_clients: clients.len() as u32,
            rank_histogram,
            unranked,
            num_cities: num_cities as u32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Client,
    Terminal,
    Visitor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: EntityKind,
    pub entity_id: String,
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, entity: EntityKind, id: &str, field: &str, reason: impl Into<String>) {
        self.violations.push(Violation {
            entity,
            entity_id: id.to_string(),
            field: field.to_string(),
            reason: reason.into(),
        });
    }
}

pub fn validate_roster(clients: &[Client], terminals: &[Terminal]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut client_ids = HashSet::new();
    for c in clients {
        if !client_ids.insert(c.client_id.as_str()) {
            report.push(EntityKind::Client, &c.client_id, "client_id", "duplicate client id");
        }
        if c.client_id.trim().is_empty() {
            report.push(EntityKind::Client, &c.client_id, "client_id", "client id required");
        }
        if let Some(rank) = c.rank {
            if !is_valid_rank(rank) {
                report.push(EntityKind::Client, &c.client_id, "rank", "rank out of range 1..5");
            }
        }
        if c.city.trim().is_empty() {
            report.push(EntityKind::Client, &c.client_id, "city", "city required");
        }
        if c.country.trim().is_empty() {
            report.push(EntityKind::Client, &c.client_id, "country", "country required");
        }
    }
    let terminal_ids: HashSet<&str> = terminals.iter().map(|t| t.terminal_id.as_str()).collect();
    let mut seen_terminals = HashSet::new();
    for t in terminals {
        if !seen_terminals.insert(t.terminal_id.as_str()) {
            report.push(EntityKind::Terminal, &t.terminal_id, "terminal_id", "duplicate terminal id");
        }
        if !client_ids.contains(t.owner_client_id.as_str()) {
            report.push(
                EntityKind::Terminal,
                &t.terminal_id,
                "owner_client_id",
                "dangling owner reference",
            );
        }
    }
    for c in clients {
        for tid in &c.terminal_ids {
            if !terminal_ids.contains(tid.as_str()) {
                report.push(EntityKind::Client, &c.client_id, "terminal_ids", format!("unknown terminal {tid}"));
            }
        }
    }
    report
}

pub fn validate_visitors(visitors: &[Visitor]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut ids = HashSet::new();
    for v in visitors {
        if !ids.insert(v.visitor_id.as_str()) {
            report.push(EntityKind::Visitor, &v.visitor_id, "visitor_id", "duplicate visitor id");
        }
        if v.visitor_id.trim().is_empty() {
            report.push(EntityKind::Visitor, &v.visitor_id, "visitor_id", "visitor id required");
        }
    }
    report
}

/// Sets each client's `terminal_ids` from terminal ownership.
pub fn link_terminals(clients: &mut [Client], terminals: &[Terminal]) {
    let mut owned: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for t in terminals {
        owned.entry(t.owner_client_id.as_str()).or_default().push(t.terminal_id.clone());
    }
    for c in clients.iter_mut() {
        c.terminal_ids = owned.remove(c.client_id.as_str()).unwrap_or_default();
    }
}
