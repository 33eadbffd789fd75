//! Greedy baseline planner and the deterministic packer behind it.
//!
//! A plan is two tours over the cities. The first tour runs from the start
//! day in city order and carries every rank-1 first visit, which must land
//! inside the first window, plus as much single-visit demand as the window
//! reserve allows. The second tour starts after the window and runs the city
//! order backwards, so the city the first tour ended in is not left and
//! re-entered. It carries rank-1 second visits and whatever the first tour
//! deferred. Each city is one contiguous block per tour.
//!
//! The packer takes a city order and a per-city client order (the chromosome
//! the optimizer searches) and always yields a schedule that satisfies the
//! hard constraints.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confirmation::ConfirmationLedger;
use crate::domain::{
    is_valid_rank, meeting_id, CityGroup, Client, DayKind, DayPlan, Generator, Meeting,
    MeetingStatus, ParameterError, RankTable, Schedule, ScheduleParameters, ScheduleStats, Slot,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("client {0} has no rank; rank it first")]
    Unranked(String),
    #[error("{overflow} rank-1 first visits do not fit in the first window")]
    WindowOverflow { overflow: u32 },
    #[error(transparent)]
    Parameters(#[from] ParameterError),
    #[error("frozen prefix has {got} days but start day {start_day} needs {}", start_day - 1)]
    PrefixMismatch { start_day: u32, got: usize },
    #[error("day {0} is outside the horizon")]
    DayOutOfRange(u32),
    #[error("duplicate client id {0}")]
    DuplicateClient(String),
    #[error("meetings_per_visiting_day {0} exceeds the two half-day slots")]
    TooManySlots(u32),
    #[error("chromosome does not match the instance: {0}")]
    BadChromosome(String),
    #[error("invalid optimizer settings: {0}")]
    InvalidOptimizer(String),
}

/// Rank ascending, then TEU descending, then id ascending.
pub fn compare_client_priority(a: &Client, b: &Client) -> Ordering {
    a.rank
        .unwrap_or(u8::MAX)
        .cmp(&b.rank.unwrap_or(u8::MAX))
        .then_with(|| b.teu.cmp(&a.teu))
        .then_with(|| a.client_id.cmp(&b.client_id))
}

/// Descending on the per-rank count vector, then TEU descending, then name.
pub fn compare_city_priority(a: &CityGroup, b: &CityGroup) -> Ordering {
    b.counts_by_rank
        .0
        .cmp(&a.counts_by_rank.0)
        .then_with(|| b.total_teu.cmp(&a.total_teu))
        .then_with(|| a.city.cmp(&b.city))
}

/// One group per distinct city, sorted by city name.
pub fn group_clients_by_city(clients: &[Client]) -> Result<Vec<CityGroup>, SchedulerError> {
    let mut groups: BTreeMap<&str, CityGroup> = BTreeMap::new();
    for c in clients {
        let rank = c
            .rank
            .filter(|r| is_valid_rank(*r))
            .ok_or_else(|| SchedulerError::Unranked(c.client_id.clone()))?;
        let g = groups.entry(c.city.as_str()).or_insert_with(|| CityGroup {
            city: c.city.clone(),
            counts_by_rank: RankTable::default(),
            total_teu: 0,
        });
        g.counts_by_rank.set(rank, g.counts_by_rank.get(rank) + 1);
        g.total_teu += c.teu;
    }
    Ok(groups.into_values().collect())
}

pub fn city_priority_order(groups: &[CityGroup]) -> Vec<String> {
    let mut sorted: Vec<&CityGroup> = groups.iter().collect();
    sorted.sort_by(|a, b| compare_city_priority(a, b));
    sorted.into_iter().map(|g| g.city.clone()).collect()
}

fn div_ceil(n: u32, d: u32) -> u32 {
    n.div_ceil(d)
}

pub fn required_meetings(group: &CityGroup, params: &ScheduleParameters) -> u32 {
    group
        .counts_by_rank
        .iter()
        .map(|(rank, k)| params.mandatory_visits(rank) * k)
        .sum()
}

/// Days needed for a city's mandatory meetings; an odd remainder takes a whole day.
pub fn required_visiting_days(group: &CityGroup, params: &ScheduleParameters) -> u32 {
    div_ceil(required_meetings(group, params), params.meetings_per_visiting_day)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub total_required_days: u32,
    pub travel_days: u32,
    pub fits: bool,
    pub slack_days: i64,
    /// Visits that must go for the rest to fit, lowest priority first.
    pub dropped: Vec<(String, u32)>,
}

fn budget_totals(per_city: &BTreeMap<&str, u32>, params: &ScheduleParameters) -> (u32, u32, i64) {
    let busy: Vec<u32> = per_city.values().copied().filter(|n| *n > 0).collect();
    let total = busy.iter().map(|n| div_ceil(*n, params.meetings_per_visiting_day)).sum::<u32>();
    let travel = (busy.len() as u32).saturating_sub(1);
    let slack = params.horizon_days as i64 - total as i64 - travel as i64;
    (total, travel, slack)
}

/// Compares mandatory demand with the horizon. Travel counts one day per
/// move between cities that carry mandatory demand.
pub fn budget_check(clients: &[Client], params: &ScheduleParameters) -> Result<FeasibilityReport, SchedulerError> {
    group_clients_by_city(clients)?;
    let mut per_city: BTreeMap<&str, u32> = BTreeMap::new();
    let mut visits: Vec<(&Client, u32)> = Vec::new();
    for c in clients {
        let rank = c.rank.expect("ranked above");
        let n = params.mandatory_visits(rank);
        *per_city.entry(c.city.as_str()).or_default() += n;
        visits.extend((1..=n).map(|v| (c, v)));
    }
    let (total, travel, slack) = budget_totals(&per_city, params);
    let mut report = FeasibilityReport {
        total_required_days: total,
        travel_days: travel,
        fits: slack >= 0,
        slack_days: slack,
        dropped: Vec::new(),
    };
    if report.fits {
        return Ok(report);
    }
    visits.sort_by(|(a, va), (b, vb)| {
        b.rank
            .cmp(&a.rank)
            .then_with(|| a.teu.cmp(&b.teu))
            .then_with(|| b.client_id.cmp(&a.client_id))
            .then_with(|| vb.cmp(va))
    });
    for (client, visit) in visits {
        *per_city.get_mut(client.city.as_str()).expect("city counted") -= 1;
        report.dropped.push((client.client_id.clone(), visit));
        if budget_totals(&per_city, params).2 >= 0 {
            break;
        }
    }
    Ok(report)
}

/// Picks the best unvisited candidate in the day's city for a free slot.
///
/// `unvisited` holds the `(client_id, visit_number)` pairs still eligible at
/// this point. Clients already meeting that day and denied clients are skipped.
pub fn fill_odd_slot(
    day: &DayPlan,
    clients: &[Client],
    unvisited: &BTreeSet<(String, u32)>,
    ledger: &ConfirmationLedger,
) -> Option<Meeting> {
    let city = day.city()?;
    let taken: HashSet<Slot> = day.meetings.iter().map(|m| m.slot).collect();
    let slot = [Slot::Am, Slot::Pm].into_iter().find(|s| !taken.contains(s))?;
    let present: HashSet<&str> = day.meetings.iter().map(|m| m.client_id.as_str()).collect();
    let by_id: HashMap<&str, &Client> = clients.iter().map(|c| (c.client_id.as_str(), c)).collect();
    let denied = ledger.denied_clients();
    unvisited
        .iter()
        .filter_map(|(id, visit)| by_id.get(id.as_str()).map(|c| (*c, *visit)))
        .filter(|(c, _)| c.city == city && !present.contains(c.client_id.as_str()))
        .filter(|(c, _)| !denied.contains(c.client_id.as_str()))
        .min_by(|(a, va), (b, vb)| compare_client_priority(a, b).then(va.cmp(vb)))
        .map(|(c, visit)| Meeting {
            meeting_id: meeting_id(&c.client_id, visit),
            client_id: c.client_id.clone(),
            day_index: day.day_index,
            slot,
            visit_number: visit,
            status: if ledger.is_confirmed(&c.client_id, visit) {
                MeetingStatus::Confirmed
            } else {
                MeetingStatus::Tentative
            },
        })
}

/// Everything a planner needs to build a schedule.
#[derive(Debug, Clone, Copy)]
pub struct PlanningInput<'a> {
    pub clients: &'a [Client],
    pub params: &'a ScheduleParameters,
    pub ledger: &'a ConfirmationLedger,
    pub start_day: u32,
    pub frozen_prefix: &'a [DayPlan],
    pub seed: u64,
}

impl<'a> PlanningInput<'a> {
    pub fn fresh(
        clients: &'a [Client],
        params: &'a ScheduleParameters,
        ledger: &'a ConfirmationLedger,
        seed: u64,
    ) -> Self {
        Self { clients, params, ledger, start_day: 1, frozen_prefix: &[], seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    WindowFirst,
    Second,
    Mandatory,
    BestEffort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Item {
    client: u32,
    visit: u32,
    class: Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlanDay {
    Visit { city: u16, items: [Option<Item>; 2] },
    Travel { from: u16, to: u16 },
    Idle,
}

/// A decoded suffix in compact form; see [`Planner::materialize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    days: Vec<PlanDay>,
}

/// Counters the fitness function is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlanTally {
    pub meetings_by_rank: RankTable<u32>,
    pub window_first_visits: u32,
    pub travel_days: u32,
    pub idle_half_days: u32,
}

impl PlanTally {
    fn add_meeting(&mut self, rank: u8, visit: u32, day: u32, window: u32) {
        self.meetings_by_rank.set(rank, self.meetings_by_rank.get(rank) + 1);
        if rank == 1 && visit == 1 && day <= window {
            self.window_first_visits += 1;
        }
    }

    /// Tally of a materialized schedule; denied meetings score nothing.
    pub fn from_schedule(schedule: &Schedule, clients: &[Client], params: &ScheduleParameters) -> Self {
        let ranks: HashMap<&str, u8> =
            clients.iter().filter_map(|c| c.rank.map(|r| (c.client_id.as_str(), r))).collect();
        let mut tally = PlanTally {
            travel_days: schedule.stats.ttd,
            idle_half_days: schedule.stats.idle_half_days,
            ..Default::default()
        };
        for m in schedule.meetings().filter(|m| m.status != MeetingStatus::Denied) {
            if let Some(rank) = ranks.get(m.client_id.as_str()) {
                tally.add_meeting(*rank, m.visit_number, m.day_index, params.first_window_days);
            }
        }
        tally
    }
}

/// City visiting order plus a client packing order per city.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome {
    /// Indices into [`Planner::cities`], each demand city exactly once.
    pub order: Vec<usize>,
    /// Per city index, a permutation of that city's demand clients.
    pub packing: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
struct ClientInfo {
    id: String,
    rank: u8,
    teu: u64,
    items: Vec<Item>,
}

#[derive(Debug, Clone)]
struct CityInfo {
    name: String,
    /// Demand clients in priority order.
    clients: Vec<usize>,
}

/// Prepared planning instance shared by the greedy and genetic paths.
#[derive(Debug, Clone)]
pub struct Planner<'a> {
    input: PlanningInput<'a>,
    cap: u32,
    clients: Vec<ClientInfo>,
    source_index: Vec<usize>,
    cities: Vec<CityInfo>,
    demand_cities: Vec<usize>,
    start_location: Option<usize>,
    prefix_tally: PlanTally,
    confirmed: HashSet<(usize, u32)>,
}

impl<'a> Planner<'a> {
    pub fn new(input: &PlanningInput<'a>) -> Result<Self, SchedulerError> {
        let params = input.params;
        params.validate()?;
        if params.meetings_per_visiting_day > 2 {
            return Err(SchedulerError::TooManySlots(params.meetings_per_visiting_day));
        }
        if input.start_day == 0 || input.start_day > params.horizon_days + 1 {
            return Err(SchedulerError::DayOutOfRange(input.start_day));
        }
        if input.frozen_prefix.len() != input.start_day as usize - 1 {
            return Err(SchedulerError::PrefixMismatch {
                start_day: input.start_day,
                got: input.frozen_prefix.len(),
            });
        }
        let mut ids = HashSet::new();
        for c in input.clients {
            if c.rank.filter(|r| is_valid_rank(*r)).is_none() {
                return Err(SchedulerError::Unranked(c.client_id.clone()));
            }
            if !ids.insert(c.client_id.as_str()) {
                return Err(SchedulerError::DuplicateClient(c.client_id.clone()));
            }
        }

        let mut held: HashMap<&str, HashSet<u32>> = HashMap::new();
        for m in input.frozen_prefix.iter().flat_map(|d| &d.meetings) {
            if m.status != MeetingStatus::Denied {
                held.entry(m.client_id.as_str()).or_default().insert(m.visit_number);
            }
        }
        let start_location_name = input
            .frozen_prefix
            .iter()
            .rev()
            .find_map(|d| d.location_after())
            .map(str::to_string);

        let denied = input.ledger.denied_clients();
        let mut order: Vec<&Client> = input.clients.iter().collect();
        order.sort_by(|a, b| compare_client_priority(a, b));

        let mut city_names: BTreeSet<&str> = BTreeSet::new();
        let mut pending: Vec<(&Client, Vec<(u32, Class)>)> = Vec::new();
        for c in order {
            if denied.contains(c.client_id.as_str()) {
                continue;
            }
            let rank = c.rank.expect("checked above");
            let done = held.get(c.client_id.as_str());
            let mandatory = params.mandatory_visits(rank);
            let visits: Vec<(u32, Class)> = (1..=params.max_visits(rank))
                .filter(|v| done.is_none_or(|d| !d.contains(v)))
                .map(|v| {
                    let class = if rank == 1 && mandatory > 0 {
                        if v == 1 {
                            Class::WindowFirst
                        } else {
                            Class::Second
                        }
                    } else if v <= mandatory {
                        Class::Mandatory
                    } else {
                        Class::BestEffort
                    };
                    (v, class)
                })
                .collect();
            if !visits.is_empty() {
                city_names.insert(c.city.as_str());
                pending.push((c, visits));
            }
        }
        if let Some(loc) = &start_location_name {
            city_names.insert(loc.as_str());
        }
        let city_index: HashMap<&str, usize> =
            city_names.iter().enumerate().map(|(i, n)| (*n, i)).collect();
        let mut cities: Vec<CityInfo> = city_names
            .iter()
            .map(|n| CityInfo { name: n.to_string(), clients: Vec::new() })
            .collect();
        let source_pos: HashMap<&str, usize> =
            input.clients.iter().enumerate().map(|(i, c)| (c.client_id.as_str(), i)).collect();
        let mut clients = Vec::with_capacity(pending.len());
        let mut source_index = Vec::with_capacity(pending.len());
        for (idx, (c, visits)) in pending.into_iter().enumerate() {
            let items = visits
                .into_iter()
                .map(|(visit, class)| Item { client: idx as u32, visit, class })
                .collect();
            cities[city_index[c.city.as_str()]].clients.push(idx);
            source_index.push(source_pos[c.client_id.as_str()]);
            clients.push(ClientInfo {
                id: c.client_id.clone(),
                rank: c.rank.expect("checked above"),
                teu: c.teu,
                items,
            });
        }
        let demand_cities = (0..cities.len()).filter(|i| !cities[*i].clients.is_empty()).collect();
        let start_location = start_location_name.as_deref().map(|n| city_index[n]);

        let ranks: HashMap<&str, u8> =
            input.clients.iter().map(|c| (c.client_id.as_str(), c.rank.expect("checked"))).collect();
        let mut prefix_tally = PlanTally::default();
        let prefix_stats = ScheduleStats::from_days(input.frozen_prefix, params.meetings_per_visiting_day);
        prefix_tally.travel_days = prefix_stats.ttd;
        prefix_tally.idle_half_days = prefix_stats.idle_half_days;
        for m in input.frozen_prefix.iter().flat_map(|d| &d.meetings) {
            if m.status == MeetingStatus::Denied {
                continue;
            }
            if let Some(rank) = ranks.get(m.client_id.as_str()) {
                prefix_tally.add_meeting(*rank, m.visit_number, m.day_index, params.first_window_days);
            }
        }

        let mut confirmed = HashSet::new();
        for (i, c) in clients.iter().enumerate() {
            for it in &c.items {
                if input.ledger.is_confirmed(&c.id, it.visit) {
                    confirmed.insert((i, it.visit));
                }
            }
        }

        Ok(Self {
            input: *input,
            cap: params.meetings_per_visiting_day,
            clients,
            source_index,
            cities,
            demand_cities,
            start_location,
            prefix_tally,
            confirmed,
        })
    }

    pub fn params(&self) -> &ScheduleParameters {
        self.input.params
    }

    pub fn input(&self) -> &PlanningInput<'a> {
        &self.input
    }

    /// All city names known to the instance, index-aligned with chromosomes.
    pub fn cities(&self) -> Vec<&str> {
        self.cities.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn demand_cities(&self) -> &[usize] {
        &self.demand_cities
    }

    /// Demand clients of a city in priority order.
    pub fn city_clients(&self, city: usize) -> &[usize] {
        &self.cities[city].clients
    }

    pub fn num_demand_clients(&self) -> usize {
        self.clients.len()
    }

    /// Clients that still need at least one visit.
    pub fn demand_clients(&self) -> Vec<Client> {
        self.source_index.iter().map(|i| self.input.clients[*i].clone()).collect()
    }

    pub fn demand_groups(&self) -> Vec<CityGroup> {
        group_clients_by_city(&self.demand_clients()).expect("demand clients are ranked")
    }

    pub fn city_index(&self, name: &str) -> Option<usize> {
        self.cities.iter().position(|c| c.name == name)
    }

    fn priority_packing(&self) -> Vec<Vec<usize>> {
        self.cities.iter().map(|c| c.clients.clone()).collect()
    }

    /// Chromosome for a city order given by name; unknown names are ignored
    /// and missing demand cities are appended in priority order.
    pub fn chromosome_for_order(&self, names: &[String]) -> Chromosome {
        let mut order: Vec<usize> = Vec::new();
        for n in names {
            if let Some(i) = self.city_index(n) {
                if self.demand_cities.contains(&i) && !order.contains(&i) {
                    order.push(i);
                }
            }
        }
        for n in city_priority_order(&self.demand_groups()) {
            let i = self.city_index(&n).expect("demand city is known");
            if !order.contains(&i) {
                order.push(i);
            }
        }
        Chromosome { order, packing: self.priority_packing() }
    }

    /// The greedy chromosome: priority city order, priority packing.
    pub fn greedy_chromosome(&self) -> Chromosome {
        self.chromosome_for_order(&city_priority_order(&self.demand_groups()))
    }

    fn validate_chromosome(&self, ch: &Chromosome) -> Result<(), SchedulerError> {
        let mut order = ch.order.clone();
        order.sort_unstable();
        if order != self.demand_cities {
            return Err(SchedulerError::BadChromosome("order is not a permutation of demand cities".into()));
        }
        if ch.packing.len() != self.cities.len() {
            return Err(SchedulerError::BadChromosome("packing length".into()));
        }
        for (c, p) in ch.packing.iter().enumerate() {
            let mut a = p.clone();
            let mut b = self.cities[c].clients.clone();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(SchedulerError::BadChromosome(format!("packing of {}", self.cities[c].name)));
            }
        }
        Ok(())
    }

    fn item_priority(&self, a: &Item, b: &Item) -> Ordering {
        let (ca, cb) = (&self.clients[a.client as usize], &self.clients[b.client as usize]);
        ca.rank
            .cmp(&cb.rank)
            .then_with(|| cb.teu.cmp(&ca.teu))
            .then_with(|| ca.id.cmp(&cb.id))
            .then_with(|| a.visit.cmp(&b.visit))
    }

    fn window_first_days(&self, cities: &[usize], firsts: &[VecDeque<Item>]) -> (u32, u32) {
        // Days and placeable items for the first-visit blocks inside the window.
        let window = self.input.params.first_window_days;
        let mut d = self.input.start_day;
        let mut loc = self.start_location;
        let mut placed = 0;
        let mut needed = 0;
        for &c in cities.iter().filter(|c| !firsts[**c].is_empty()) {
            let travel = u32::from(loc.is_some_and(|l| l != c));
            let days = div_ceil(firsts[c].len() as u32, self.cap);
            needed += travel + days;
            d += travel;
            loc = Some(c);
            let fit_days = if d > window { 0 } else { (window + 1 - d).min(days) };
            placed += (fit_days * self.cap).min(firsts[c].len() as u32);
            d += days;
        }
        (needed, placed)
    }

    /// Decodes a chromosome into a feasible plan for days `start_day..=horizon`.
    pub fn decode(&self, ch: &Chromosome) -> Result<Plan, SchedulerError> {
        self.validate_chromosome(ch)?;
        let params = self.input.params;
        let (cap, window, horizon) = (self.cap, params.first_window_days, params.horizon_days);
        let n = self.cities.len();
        let mut firsts = vec![VecDeque::new(); n];
        let mut seconds = vec![VecDeque::new(); n];
        let mut mandatory = vec![VecDeque::new(); n];
        let mut best_effort = vec![VecDeque::new(); n];
        for (c, packing) in ch.packing.iter().enumerate() {
            for &cl in packing {
                for it in &self.clients[cl].items {
                    match it.class {
                        Class::WindowFirst => firsts[c].push_back(*it),
                        Class::Second => seconds[c].push_back(*it),
                        Class::Mandatory => mandatory[c].push_back(*it),
                        Class::BestEffort => best_effort[c].push_back(*it),
                    }
                }
            }
        }

        let mut tour1: Vec<usize> = ch.order.clone();
        if let Some(l) = self.start_location {
            if let Some(pos) = tour1.iter().position(|c| *c == l && !firsts[l].is_empty()) {
                let c = tour1.remove(pos);
                tour1.insert(0, c);
            }
        }
        let total_firsts: u32 = firsts.iter().map(|q| q.len() as u32).sum();
        if total_firsts > 0 {
            let available = (window + 1).saturating_sub(self.input.start_day);
            let (needed, placed) = self.window_first_days(&tour1, &firsts);
            if needed > available {
                return Err(SchedulerError::WindowOverflow { overflow: total_firsts - placed });
            }
        }

        // Reserve for later first-visit cities (travel + block), and a looser
        // bound on all later tour-1 mandatory work.
        let len = tour1.len();
        let mut first_reserve = vec![0u32; len + 1];
        let mut later_work = vec![0u32; len + 1];
        for i in (0..len).rev() {
            let c = tour1[i];
            let f = firsts[c].len() as u32;
            first_reserve[i] = first_reserve[i + 1] + if f == 0 { 0 } else { 1 + div_ceil(f, cap) };
            later_work[i] = later_work[i + 1] + 1 + div_ceil(f + mandatory[c].len() as u32, cap);
        }

        let mut days: Vec<PlanDay> = Vec::with_capacity((horizon + 1 - self.input.start_day) as usize);
        let mut d = self.input.start_day;
        let mut loc = self.start_location;
        let mut deferred_m = vec![VecDeque::new(); n];
        let mut deferred_b = vec![VecDeque::new(); n];

        let tour2_need = |seconds: &[VecDeque<Item>], deferred: &[VecDeque<Item>]| -> u32 {
            (0..n)
                .map(|c| {
                    let k = (seconds[c].len() + deferred.get(c).map_or(0, |q| q.len())) as u32;
                    if k == 0 {
                        0
                    } else {
                        1 + div_ceil(k, cap)
                    }
                })
                .sum()
        };
        let no_deferred: Vec<VecDeque<Item>> = Vec::new();

        for (i, &c) in tour1.iter().enumerate() {
            let travel = u32::from(loc.is_some_and(|l| l != c));
            let first_after = first_reserve[i + 1];
            let seconds_pending = seconds.iter().any(|q| !q.is_empty());
            // May a day opened at `day` hold non-first-visit work?
            let can_open = |day: u32, is_mandatory: bool, deferred_m: &[VecDeque<Item>], seconds: &[VecDeque<Item>]| {
                if day > horizon {
                    return false;
                }
                if first_after > 0 && day + 1 + first_after > window + 1 {
                    return false;
                }
                let after_window = if seconds_pending { window + 1 } else { 0 };
                if is_mandatory {
                    return !seconds_pending || (day + 1).max(after_window) + tour2_need(seconds, &no_deferred) <= horizon + 1;
                }
                let tour2_start = (day + 1 + later_work[i + 1]).max(if seconds_pending { window + 1 } else { 0 });
                tour2_start + tour2_need(seconds, deferred_m) <= horizon + 1
            };
            if firsts[c].is_empty() {
                let is_mandatory = !mandatory[c].is_empty();
                if !can_open(d + travel, is_mandatory, &deferred_m, &seconds) {
                    deferred_m[c].extend(mandatory[c].drain(..));
                    deferred_b[c].extend(best_effort[c].drain(..));
                    continue;
                }
            }
            if travel == 1 {
                days.push(PlanDay::Travel { from: loc.expect("travel has origin") as u16, to: c as u16 });
                d += 1;
            }
            loc = Some(c);
            loop {
                let next = if !firsts[c].is_empty() {
                    Class::WindowFirst
                } else if !mandatory[c].is_empty() {
                    Class::Mandatory
                } else if !best_effort[c].is_empty() {
                    Class::BestEffort
                } else {
                    break;
                };
                if next != Class::WindowFirst && !can_open(d, next == Class::Mandatory, &deferred_m, &seconds) {
                    break;
                }
                if d > horizon {
                    break;
                }
                debug_assert!(next != Class::WindowFirst || d <= window);
                let mut items = [None; 2];
                let mut k = 0;
                for q in [&mut firsts[c], &mut mandatory[c], &mut best_effort[c]] {
                    take_legal(q, &mut items, &mut k, cap as usize, |_| true);
                }
                if (k as u32) < cap && d > window {
                    self.fill_odd(&mut seconds[c], &mut items, &mut k, cap as usize);
                }
                if k == 0 {
                    break;
                }
                days.push(PlanDay::Visit { city: c as u16, items });
                d += 1;
            }
            deferred_m[c].extend(mandatory[c].drain(..));
            deferred_b[c].extend(best_effort[c].drain(..));
        }

        let mut tour2: Vec<usize> = ch
            .order
            .iter()
            .rev()
            .copied()
            .filter(|c| !seconds[*c].is_empty() || !deferred_m[*c].is_empty() || !deferred_b[*c].is_empty())
            .collect();
        if let Some(l) = loc {
            if let Some(pos) = tour2.iter().position(|c| *c == l) {
                let c = tour2.remove(pos);
                tour2.insert(0, c);
            }
        }
        if tour2.iter().any(|c| !seconds[*c].is_empty()) {
            while d <= window && d <= horizon {
                days.push(PlanDay::Idle);
                d += 1;
            }
        }
        let len = tour2.len();
        let block = |k: u32| if k == 0 { 0 } else { 1 + div_ceil(k, cap) };
        let mut mandatory_after = vec![0u32; len + 1];
        let mut seconds_after = vec![0u32; len + 1];
        for k in (0..len).rev() {
            let c = tour2[k];
            let s = seconds[c].len() as u32;
            mandatory_after[k] = mandatory_after[k + 1] + block(s + deferred_m[c].len() as u32);
            seconds_after[k] = seconds_after[k + 1] + block(s);
        }
        for (k, &c) in tour2.iter().enumerate() {
            if d > horizon {
                break;
            }
            let travel = u32::from(loc.is_some_and(|l| l != c));
            // Room for a day of this class at `day`, keeping later cities reachable.
            let fits = |day: u32, class: Class| match class {
                Class::Second => true,
                Class::Mandatory => day + 1 + seconds_after[k + 1] <= horizon + 1,
                _ => day + 1 + mandatory_after[k + 1] <= horizon + 1,
            };
            let head = |seconds: &VecDeque<Item>, dm: &VecDeque<Item>, db: &VecDeque<Item>| {
                if !seconds.is_empty() {
                    Some(Class::Second)
                } else if !dm.is_empty() {
                    Some(Class::Mandatory)
                } else if !db.is_empty() {
                    Some(Class::BestEffort)
                } else {
                    None
                }
            };
            match head(&seconds[c], &deferred_m[c], &deferred_b[c]) {
                Some(class) if fits(d + travel, class) => {}
                _ => continue,
            }
            if travel == 1 {
                days.push(PlanDay::Travel { from: loc.expect("travel has origin") as u16, to: c as u16 });
                d += 1;
            }
            loc = Some(c);
            while d <= horizon {
                match head(&seconds[c], &deferred_m[c], &deferred_b[c]) {
                    Some(class) if fits(d, class) => {}
                    _ => break,
                }
                let mut items = [None; 2];
                let mut k = 0;
                let legal = |it: &Item| it.class != Class::Second || d > window;
                for q in [&mut seconds[c], &mut deferred_m[c], &mut deferred_b[c]] {
                    take_legal(q, &mut items, &mut k, cap as usize, legal);
                }
                if k == 0 {
                    break;
                }
                days.push(PlanDay::Visit { city: c as u16, items });
                d += 1;
            }
        }
        while d <= horizon {
            days.push(PlanDay::Idle);
            d += 1;
        }
        Ok(Plan { days })
    }

    fn fill_odd(&self, pool: &mut VecDeque<Item>, items: &mut [Option<Item>; 2], k: &mut usize, cap: usize) {
        while *k < cap {
            let best = pool
                .iter()
                .enumerate()
                .filter(|(_, it)| !items[..*k].iter().flatten().any(|x| x.client == it.client))
                .min_by(|(_, a), (_, b)| self.item_priority(a, b))
                .map(|(i, _)| i);
            match best {
                Some(i) => {
                    items[*k] = pool.remove(i);
                    *k += 1;
                }
                None => break,
            }
        }
    }

    /// Counters for prefix plus plan.
    pub fn tally(&self, plan: &Plan) -> PlanTally {
        let window = self.input.params.first_window_days;
        let mut t = self.prefix_tally;
        for (i, day) in plan.days.iter().enumerate() {
            let day_index = self.input.start_day + i as u32;
            match day {
                PlanDay::Visit { items, .. } => {
                    let mut k = 0;
                    for it in items.iter().flatten() {
                        k += 1;
                        t.add_meeting(self.clients[it.client as usize].rank, it.visit, day_index, window);
                    }
                    t.idle_half_days += self.cap - k;
                }
                PlanDay::Travel { .. } => t.travel_days += 1,
                PlanDay::Idle => t.idle_half_days += self.cap,
            }
        }
        t
    }

    pub fn materialize(&self, plan: &Plan, generator: Generator) -> Schedule {
        let mut days: Vec<DayPlan> = self.input.frozen_prefix.to_vec();
        for (i, day) in plan.days.iter().enumerate() {
            let day_index = self.input.start_day + i as u32;
            let day_plan = match day {
                PlanDay::Idle => DayPlan::idle(day_index),
                PlanDay::Travel { from, to } => DayPlan::travel(
                    day_index,
                    &self.cities[*from as usize].name,
                    &self.cities[*to as usize].name,
                ),
                PlanDay::Visit { city, items } => DayPlan {
                    day_index,
                    kind: DayKind::Visiting { city: self.cities[*city as usize].name.clone() },
                    meetings: items
                        .iter()
                        .flatten()
                        .enumerate()
                        .map(|(slot, it)| {
                            let c = &self.clients[it.client as usize];
                            Meeting {
                                meeting_id: meeting_id(&c.id, it.visit),
                                client_id: c.id.clone(),
                                day_index,
                                slot: Slot::from_index(slot),
                                visit_number: it.visit,
                                status: if self.confirmed.contains(&(it.client as usize, it.visit)) {
                                    MeetingStatus::Confirmed
                                } else {
                                    MeetingStatus::Tentative
                                },
                            }
                        })
                        .collect(),
                },
            };
            days.push(day_plan);
        }
        let stats = ScheduleStats::from_days(&days, self.cap);
        Schedule { days, stats, seed: self.input.seed, generator }
    }
}

fn take_legal(
    queue: &mut VecDeque<Item>,
    items: &mut [Option<Item>; 2],
    k: &mut usize,
    cap: usize,
    legal: impl Fn(&Item) -> bool,
) {
    let mut i = 0;
    while *k < cap && i < queue.len() {
        let it = queue[i];
        let clash = items[..*k].iter().flatten().any(|x| x.client == it.client);
        if !clash && legal(&it) {
            items[*k] = queue.remove(i);
            *k += 1;
        } else {
            i += 1;
        }
    }
}

/// Builds the greedy baseline: cities by priority, clients by priority.
pub fn generate_greedy_schedule(input: &PlanningInput<'_>) -> Result<Schedule, SchedulerError> {
    let planner = Planner::new(input)?;
    let plan = planner.decode(&planner.greedy_chromosome())?;
    Ok(planner.materialize(&plan, Generator::Greedy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confirmation::{record_response, Response};

    fn group(city: &str, counts: [u32; 5], teu: u64) -> CityGroup {
        CityGroup { city: city.into(), counts_by_rank: RankTable(counts), total_teu: teu }
    }

    fn client(id: &str, city: &str, rank: u8, teu: u64) -> Client {
        Client::new(id, city, Some(rank), teu)
    }

    #[test]
    fn grouping_counts_ranks() {
        let roster = vec![
            client("a", "Rotterdam", 1, 1),
            client("b", "Rotterdam", 1, 1),
            client("c", "Rotterdam", 3, 1),
        ];
        let groups = group_clients_by_city(&roster).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].counts_by_rank, RankTable([2, 0, 1, 0, 0]));
        assert!(group_clients_by_city(&[]).unwrap().is_empty());
        let two = vec![client("a", "X", 1, 1), client("b", "Y", 2, 1), client("c", "Y", 2, 1)];
        let groups = group_clients_by_city(&two).unwrap();
        assert_eq!(groups.iter().map(CityGroup::total_clients).sum::<u32>(), 3);
    }

    #[test]
    fn grouping_rejects_unranked() {
        let roster = vec![Client::new("a", "X", None, 1)];
        assert_eq!(group_clients_by_city(&roster), Err(SchedulerError::Unranked("a".into())));
    }

    #[test]
    fn priority_prefers_rank_one_count() {
        let order = city_priority_order(&[group("B", [1, 9, 0, 0, 0], 0), group("A", [3, 0, 0, 0, 0], 0)]);
        assert_eq!(order, vec!["A", "B"]);
        let order = city_priority_order(&[group("B", [2, 0, 0, 0, 0], 100_000), group("A", [2, 0, 0, 0, 0], 900_000)]);
        assert_eq!(order, vec!["A", "B"]);
    }

    #[test]
    fn priority_lexicographic_matches_brute_force() {
        // Every ordering of the two cities; the winner is the one whose count
        // vectors are non-increasing along the order.
        let groups = [group("A", [0, 4, 0, 0, 0], 0), group("B", [1, 0, 0, 0, 0], 0)];
        let perms = [[0usize, 1], [1, 0]];
        let best = perms
            .iter()
            .find(|p| groups[p[0]].counts_by_rank.0 >= groups[p[1]].counts_by_rank.0)
            .unwrap();
        let expected: Vec<String> = best.iter().map(|i| groups[*i].city.clone()).collect();
        assert_eq!(city_priority_order(&groups), expected);
        assert_eq!(expected, vec!["B", "A"]);
    }

    #[test]
    fn required_days_examples() {
        let p = ScheduleParameters::default();
        assert_eq!(required_visiting_days(&group("X", [1, 1, 0, 0, 0], 0), &p), 2);
        assert_eq!(required_visiting_days(&group("X", [0, 4, 0, 0, 0], 0), &p), 2);
        assert_eq!(required_visiting_days(&group("X", [3, 0, 0, 0, 0], 0), &p), 3);
    }

    #[test]
    fn required_days_match_slot_enumeration() {
        // Three rank-1 clients: six meetings, two per day, no client twice a day.
        // Enumerate assignments of meetings to days 0..k and find the least k.
        let meetings: Vec<usize> = (0..3).flat_map(|c| [c, c]).collect();
        let min_days = (1usize..=6)
            .find(|&k| {
                let total = k.pow(meetings.len() as u32);
                (0..total).any(|code| {
                    let mut per_day = vec![Vec::new(); k];
                    let mut x = code;
                    for &m in &meetings {
                        per_day[x % k].push(m);
                        x /= k;
                    }
                    per_day.iter().all(|d| {
                        d.len() <= 2 && (d.len() < 2 || d[0] != d[1])
                    })
                })
            })
            .unwrap();
        assert_eq!(min_days as u32, 3);
    }

    fn rank_block(prefix: &str, city: &str, rank: u8, n: usize) -> Vec<Client> {
        (0..n).map(|i| client(&format!("{prefix}{i:03}"), city, rank, 1000 + i as u64)).collect()
    }

    #[test]
    fn budget_exact_fill() {
        let mut roster = rank_block("a", "A", 1, 100);
        roster.extend(rank_block("b", "B", 2, 158));
        let r = budget_check(&roster, &ScheduleParameters::default()).unwrap();
        assert_eq!((r.total_required_days, r.travel_days, r.slack_days, r.fits), (179, 1, 0, true));
        assert!(r.dropped.is_empty());
    }

    #[test]
    fn budget_single_city() {
        let roster = rank_block("a", "A", 2, 20);
        let r = budget_check(&roster, &ScheduleParameters::default()).unwrap();
        assert_eq!((r.travel_days, r.slack_days, r.fits), (0, 170, true));
    }

    #[test]
    fn budget_overflow_drops_lowest_priority() {
        let mut roster = rank_block("a", "A", 1, 100);
        roster.extend(rank_block("b", "B", 2, 120));
        roster.extend(rank_block("c", "C", 3, 60));
        let p = ScheduleParameters::default();
        let r = budget_check(&roster, &p).unwrap();
        assert_eq!((r.total_required_days, r.travel_days, r.slack_days, r.fits), (190, 2, -12, false));
        assert_eq!(r.dropped.len(), 24);
        // Lowest TEU rank-3 clients go first.
        assert_eq!(r.dropped[0], ("c000".to_string(), 1));
        let kept: Vec<Client> = roster
            .iter()
            .filter(|c| !r.dropped.iter().any(|(id, _)| *id == c.client_id))
            .cloned()
            .collect();
        assert!(budget_check(&kept, &p).unwrap().fits);
        let one_less: Vec<Client> = roster
            .iter()
            .filter(|c| !r.dropped[..23].iter().any(|(id, _)| *id == c.client_id))
            .cloned()
            .collect();
        assert!(!budget_check(&one_less, &p).unwrap().fits);
    }

    fn fresh(clients: &[Client]) -> Schedule {
        let ledger = ConfirmationLedger::new();
        let params = ScheduleParameters::default();
        let s = generate_greedy_schedule(&PlanningInput::fresh(clients, &params, &ledger, 7)).unwrap();
        s.check(clients, &params).unwrap();
        s
    }

    #[test]
    fn two_rank_one_clients_share_day_one() {
        let roster = vec![client("a", "X", 1, 10), client("b", "X", 1, 20)];
        let s = fresh(&roster);
        let day1 = &s.days[0];
        assert_eq!(day1.meetings.len(), 2);
        assert_eq!(day1.meetings[0].client_id, "b");
        assert_eq!(day1.meetings[0].slot, Slot::Am);
        assert_eq!(day1.meetings[1].slot, Slot::Pm);
        assert!(day1.meetings.iter().all(|m| m.visit_number == 1));
        let seconds: Vec<_> = s.meetings().filter(|m| m.visit_number == 2).collect();
        assert_eq!(seconds.len(), 2);
        assert!(seconds.iter().all(|m| m.day_index >= 91));
        assert_eq!(s.stats.tvd + s.stats.ttd + s.stats.idle, 180);
    }

    #[test]
    fn denied_client_is_excluded() {
        let roster = vec![client("a", "X", 2, 10)];
        let mut ledger = ConfirmationLedger::new();
        ledger.ensure_pending("a", 1);
        let ledger = record_response(&ledger, "a", 1, Response::Denied, 1).unwrap();
        let params = ScheduleParameters::default();
        let s = generate_greedy_schedule(&PlanningInput::fresh(&roster, &params, &ledger, 1)).unwrap();
        assert_eq!(s.meetings().count(), 0);
        assert_eq!(s.stats.idle, 180);
    }

    #[test]
    fn rank_one_city_comes_before_travel_and_second_city() {
        let mut roster = rank_block("a", "A", 1, 3);
        roster.push(client("b", "B", 2, 10));
        let s = fresh(&roster);
        let first_travel = s.days.iter().position(|d| matches!(d.kind, DayKind::Travel { .. })).unwrap();
        let first_b = s.days.iter().position(|d| d.city() == Some("B")).unwrap();
        assert!(s.days[..first_travel].iter().filter_map(|d| d.city()).all(|c| c == "A"));
        assert!(s.days[..first_travel].iter().any(|d| d.city() == Some("A")));
        assert_eq!(first_b, first_travel + 1);
    }

    #[test]
    fn confirmed_candidates_are_firm() {
        let roster = vec![client("a", "X", 2, 10), client("b", "X", 3, 10)];
        let mut ledger = ConfirmationLedger::new();
        ledger.ensure_pending("a", 1);
        let ledger = record_response(&ledger, "a", 1, Response::Confirmed, 1).unwrap();
        let params = ScheduleParameters::default();
        let s = generate_greedy_schedule(&PlanningInput::fresh(&roster, &params, &ledger, 1)).unwrap();
        let a = s.find_meeting("a.v1").unwrap();
        let b = s.find_meeting("b.v1").unwrap();
        assert_eq!(a.status, MeetingStatus::Confirmed);
        assert_eq!(b.status, MeetingStatus::Tentative);
    }

    #[test]
    fn window_overflow_reports_count() {
        let params = ScheduleParameters { horizon_days: 20, first_window_days: 2, ..Default::default() };
        let roster = rank_block("a", "A", 1, 6);
        let ledger = ConfirmationLedger::new();
        let err = generate_greedy_schedule(&PlanningInput::fresh(&roster, &params, &ledger, 1)).unwrap_err();
        assert_eq!(err, SchedulerError::WindowOverflow { overflow: 2 });
    }

    #[test]
    fn unranked_roster_is_rejected() {
        let roster = vec![Client::new("a", "X", None, 1)];
        let ledger = ConfirmationLedger::new();
        let params = ScheduleParameters::default();
        let err = generate_greedy_schedule(&PlanningInput::fresh(&roster, &params, &ledger, 1)).unwrap_err();
        assert_eq!(err, SchedulerError::Unranked("a".into()));
    }

    #[test]
    fn prefix_must_match_start_day() {
        let roster = vec![client("a", "X", 2, 10)];
        let ledger = ConfirmationLedger::new();
        let params = ScheduleParameters::default();
        let input = PlanningInput { start_day: 3, ..PlanningInput::fresh(&roster, &params, &ledger, 1) };
        assert!(matches!(generate_greedy_schedule(&input), Err(SchedulerError::PrefixMismatch { .. })));
    }

    fn day_with(city: &str, ids: &[&str]) -> DayPlan {
        DayPlan {
            day_index: 5,
            kind: DayKind::Visiting { city: city.into() },
            meetings: ids
                .iter()
                .enumerate()
                .map(|(i, id)| Meeting {
                    meeting_id: meeting_id(id, 1),
                    client_id: id.to_string(),
                    day_index: 5,
                    slot: Slot::from_index(i),
                    visit_number: 1,
                    status: MeetingStatus::Tentative,
                })
                .collect(),
        }
    }

    fn unvisited(ids: &[&str]) -> BTreeSet<(String, u32)> {
        ids.iter().map(|id| (id.to_string(), 1)).collect()
    }

    #[test]
    fn odd_slot_takes_next_best_rank() {
        let roster = vec![client("m", "X", 1, 1), client("r3", "X", 3, 1), client("r4", "X", 4, 1), client("far", "Y", 2, 1)];
        let day = day_with("X", &["m"]);
        let pick = fill_odd_slot(&day, &roster, &unvisited(&["r3", "r4", "far"]), &ConfirmationLedger::new()).unwrap();
        assert_eq!(pick.client_id, "r3");
        assert_eq!(pick.slot, Slot::Pm);
        assert!(fill_odd_slot(&day, &roster, &unvisited(&["far"]), &ConfirmationLedger::new()).is_none());
    }

    #[test]
    fn odd_slot_tie_breaks_on_teu() {
        let roster = vec![client("m", "X", 1, 1), client("p", "X", 2, 300_000), client("q", "X", 2, 400_000)];
        let day = day_with("X", &["m"]);
        let cands = unvisited(&["p", "q"]);
        let pick = fill_odd_slot(&day, &roster, &cands, &ConfirmationLedger::new()).unwrap();
        // Exhaustive: the pick must not be beaten by any other candidate.
        for (id, _) in &cands {
            let other = roster.iter().find(|c| &c.client_id == id).unwrap();
            let chosen = roster.iter().find(|c| c.client_id == pick.client_id).unwrap();
            assert_ne!(compare_client_priority(other, chosen), Ordering::Less);
        }
        assert_eq!(pick.client_id, "q");
    }

    #[test]
    fn greedy_is_deterministic() {
        let mut roster = rank_block("a", "A", 1, 5);
        roster.extend(rank_block("b", "B", 3, 4));
        roster.extend(rank_block("c", "C", 5, 3));
        let a = serde_json::to_string(&fresh(&roster)).unwrap();
        let b = serde_json::to_string(&fresh(&roster)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tally_routes_agree() {
        let mut roster = rank_block("a", "A", 1, 5);
        roster.extend(rank_block("b", "B", 3, 4));
        roster.extend(rank_block("c", "C", 4, 3));
        let ledger = ConfirmationLedger::new();
        let params = ScheduleParameters::default();
        let input = PlanningInput::fresh(&roster, &params, &ledger, 1);
        let planner = Planner::new(&input).unwrap();
        let plan = planner.decode(&planner.greedy_chromosome()).unwrap();
        let schedule = planner.materialize(&plan, Generator::Greedy);
        assert_eq!(planner.tally(&plan), PlanTally::from_schedule(&schedule, &roster, &params));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn roster() -> impl Strategy<Value = Vec<Client>> {
            (1usize..=10).prop_flat_map(|cities| {
                prop::collection::vec((0..cities, 1u8..=5, 0u64..800_000), 5..=60).prop_map(|rows| {
                    rows.into_iter()
                        .enumerate()
                        .map(|(i, (c, r, teu))| client(&format!("c{i:02}"), &format!("city{c}"), r, teu))
                        .collect()
                })
            })
        }

        fn quotas_hold(s: &Schedule, roster: &[Client], params: &ScheduleParameters) -> Result<(), String> {
            for c in roster {
                let mut visits: Vec<&Meeting> = s.meetings().filter(|m| m.client_id == c.client_id).collect();
                visits.sort_by_key(|m| m.visit_number);
                let rank = c.rank.unwrap();
                let n = visits.len() as u32;
                let ok = match rank {
                    1 => n == 2 && visits[0].day_index <= params.first_window_days && visits[1].day_index > params.first_window_days,
                    2 | 3 => n == 1,
                    _ => n <= 1,
                };
                if !ok {
                    return Err(format!("{} rank {} has {:?}", c.client_id, rank, visits.iter().map(|m| m.day_index).collect::<Vec<_>>()));
                }
            }
            Ok(())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(300))]
            #[test]
            fn greedy_schedules_are_feasible(roster in roster()) {
                let params = ScheduleParameters::default();
                let ledger = ConfirmationLedger::new();
                match generate_greedy_schedule(&PlanningInput::fresh(&roster, &params, &ledger, 1)) {
                    Ok(s) => {
                        prop_assert_eq!(s.check(&roster, &params), Ok(()));
                        prop_assert_eq!(s.stats.tvd + s.stats.ttd + s.stats.idle, 180);
                        if budget_check(&roster, &params).unwrap().fits {
                            prop_assert_eq!(quotas_hold(&s, &roster, &params), Ok(()));
                        }
                    }
                    Err(SchedulerError::WindowOverflow { .. }) => {}
                    Err(e) => prop_assert!(false, "{e}"),
                }
            }
        }
    }
}
