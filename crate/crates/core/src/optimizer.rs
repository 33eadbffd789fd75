//! Genetic search over city orders and per-city packings.
//!
//! Individuals are [`Chromosome`]s decoded by the scheduler's packer, so
//! every individual is a feasible schedule. The greedy chromosome sits at
//! index 0 of the first generation and elites are carried over with a stable
//! sort, which keeps the result at least as fit as the greedy baseline.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Client, Generator, RankTable, Schedule, ScheduleParameters, ScheduleViolation};
use crate::scheduler::{Chromosome, PlanTally, Planner, PlanningInput, SchedulerError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitnessWeights {
    pub rank_weight: RankTable<f64>,
    pub window_bonus: f64,
    pub travel_penalty: f64,
    pub idle_penalty: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self {
            rank_weight: RankTable([16.0, 8.0, 4.0, 2.0, 1.0]),
            window_bonus: 5.0,
            travel_penalty: 1.0,
            idle_penalty: 0.5,
        }
    }
}

impl FitnessWeights {
    pub fn validate(&self) -> Result<(), String> {
        let w = &self.rank_weight.0;
        let all = w.iter().chain([&self.window_bonus, &self.travel_penalty, &self.idle_penalty]);
        if all.clone().any(|x| !x.is_finite() || *x < 0.0) {
            return Err("weights must be finite and non-negative".into());
        }
        if w.windows(2).any(|p| p[0] <= p[1]) {
            return Err("rank weights must strictly decrease with rank".into());
        }
        Ok(())
    }

    pub fn score(&self, tally: &PlanTally) -> f64 {
        let meetings: f64 = tally
            .meetings_by_rank
            .iter()
            .map(|(rank, n)| self.rank_weight.get(rank) * n as f64)
            .sum();
        meetings + self.window_bonus * tally.window_first_visits as f64
            - self.travel_penalty * tally.travel_days as f64
            - self.idle_penalty * tally.idle_half_days as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population_size: 50,
            generations: 200,
            tournament_size: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            elitism: 2,
            seed: 0,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.elitism < 1 || self.population_size < self.elitism {
            return Err("need population_size >= elitism >= 1".into());
        }
        if self.tournament_size < 1 {
            return Err("tournament_size must be at least 1".into());
        }
        for (name, r) in [("crossover_rate", self.crossover_rate), ("mutation_rate", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Scores a schedule; schedules that break a hard constraint have no score.
pub fn fitness(
    schedule: &Schedule,
    clients: &[Client],
    params: &ScheduleParameters,
    weights: &FitnessWeights,
) -> Result<f64, ScheduleViolation> {
    schedule.check(clients, params)?;
    Ok(weights.score(&PlanTally::from_schedule(schedule, clients, params)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub schedule: Schedule,
    pub fitness: f64,
    pub greedy_fitness: f64,
    /// Best fitness after each generation, starting with the initial population.
    pub best_per_generation: Vec<f64>,
    /// Distinct chromosomes decoded.
    pub evaluations: usize,
}

pub fn evolve(
    input: &PlanningInput<'_>,
    weights: &FitnessWeights,
    ga: &GaParams,
) -> Result<EvolutionReport, SchedulerError> {
    evolve_seeded(input, weights, ga, &[])
}

/// Like [`evolve`], with city orders (for instance from a reused case)
/// injected into the first generation.
pub fn evolve_seeded(
    input: &PlanningInput<'_>,
    weights: &FitnessWeights,
    ga: &GaParams,
    seed_orders: &[Vec<String>],
) -> Result<EvolutionReport, SchedulerError> {
    let planner = Planner::new(input)?;
    let greedy = planner.greedy_chromosome();
    let seeds: Vec<Chromosome> = seed_orders.iter().map(|o| planner.chromosome_for_order(o)).collect();
    evolve_with_planner(&planner, greedy, &seeds, weights, ga)
}

struct Evaluator<'p, 'a> {
    planner: &'p Planner<'a>,
    weights: &'p FitnessWeights,
    cache: HashMap<Chromosome, f64>,
}

impl Evaluator<'_, '_> {
    fn score(&self, ch: &Chromosome) -> f64 {
        match self.planner.decode(ch) {
            Ok(plan) => self.weights.score(&self.planner.tally(&plan)),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn evaluate(&mut self, population: &[Chromosome]) -> Vec<f64> {
        let mut fresh: Vec<&Chromosome> = Vec::new();
        for ch in population {
            if !self.cache.contains_key(ch) && !fresh.contains(&ch) {
                fresh.push(ch);
            }
        }
        let scored: Vec<f64> = fresh.par_iter().map(|ch| self.score(ch)).collect();
        for (ch, f) in fresh.into_iter().zip(scored) {
            self.cache.insert(ch.clone(), f);
        }
        population.iter().map(|ch| self.cache[ch]).collect()
    }
}

fn random_chromosome(template: &Chromosome, rng: &mut ChaCha8Rng) -> Chromosome {
    let mut ch = template.clone();
    ch.order.shuffle(rng);
    for p in &mut ch.packing {
        p.shuffle(rng);
    }
    ch
}

fn tournament(fit: &[f64], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut best = rng.gen_range(0..fit.len());
    for _ in 1..size {
        let i = rng.gen_range(0..fit.len());
        if fit[i] > fit[best] || (fit[i] == fit[best] && i < best) {
            best = i;
        }
    }
    best
}

/// Order crossover: a slice of `a` stays in place, the rest follows `b`'s order.
pub fn order_crossover(a: &[usize], b: &[usize], rng: &mut impl Rng) -> Vec<usize> {
    let n = a.len();
    if n < 2 {
        return a.to_vec();
    }
    let (mut i, mut j) = (rng.gen_range(0..n), rng.gen_range(0..n));
    if i > j {
        std::mem::swap(&mut i, &mut j);
    }
    let kept = &a[i..=j];
    let mut rest = b.iter().filter(|x| !kept.contains(x));
    (0..n)
        .map(|k| if (i..=j).contains(&k) { a[k] } else { *rest.next().expect("same elements") })
        .collect()
}

fn crossover(a: &Chromosome, b: &Chromosome, rng: &mut ChaCha8Rng) -> Chromosome {
    Chromosome {
        order: order_crossover(&a.order, &b.order, rng),
        packing: a
            .packing
            .iter()
            .zip(&b.packing)
            .map(|(x, y)| if rng.gen_bool(0.5) { x.clone() } else { y.clone() })
            .collect(),
    }
}

fn swap_two(v: &mut [usize], rng: &mut ChaCha8Rng) {
    if v.len() >= 2 {
        let i = rng.gen_range(0..v.len());
        let j = rng.gen_range(0..v.len());
        v.swap(i, j);
    }
}

fn mutate(ch: &mut Chromosome, rate: f64, rng: &mut ChaCha8Rng) {
    if rng.gen_bool(rate) {
        swap_two(&mut ch.order, rng);
    }
    for p in &mut ch.packing {
        if p.len() >= 2 && rng.gen_bool(rate) {
            swap_two(p, rng);
        }
    }
}

/// Number of distinct chromosomes, saturating.
fn search_space(ch: &Chromosome) -> u128 {
    let fact = |n: usize| (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k));
    std::iter::once(ch.order.len())
        .chain(ch.packing.iter().map(Vec::len))
        .try_fold(1u128, |acc, n| fact(n).and_then(|f| acc.checked_mul(f)))
        .unwrap_or(u128::MAX)
}

pub fn evolve_with_planner(
    planner: &Planner<'_>,
    greedy: Chromosome,
    seeds: &[Chromosome],
    weights: &FitnessWeights,
    ga: &GaParams,
) -> Result<EvolutionReport, SchedulerError> {
    ga.validate().map_err(SchedulerError::InvalidOptimizer)?;
    weights.validate().map_err(SchedulerError::InvalidOptimizer)?;
    let greedy_plan = planner.decode(&greedy)?;
    let greedy_fitness = weights.score(&planner.tally(&greedy_plan));
    let mut eval = Evaluator { planner, weights, cache: HashMap::new() };
    eval.cache.insert(greedy.clone(), greedy_fitness);

    if search_space(&greedy) <= 1 {
        return Ok(EvolutionReport {
            schedule: planner.materialize(&greedy_plan, Generator::Ga),
            fitness: greedy_fitness,
            greedy_fitness,
            best_per_generation: vec![greedy_fitness],
            evaluations: 1,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(ga.seed);
    let mut population: Vec<Chromosome> = vec![greedy.clone()];
    population.extend(seeds.iter().take(ga.population_size - 1).cloned());
    while population.len() < ga.population_size {
        population.push(random_chromosome(&greedy, &mut rng));
    }

    let mut history = Vec::with_capacity(ga.generations + 1);
    let mut ranked;
    loop {
        let fit = eval.evaluate(&population);
        let mut idx: Vec<usize> = (0..population.len()).collect();
        idx.sort_by(|a, b| fit[*b].total_cmp(&fit[*a]));
        ranked = idx.iter().map(|i| (population[*i].clone(), fit[*i])).collect::<Vec<_>>();
        history.push(ranked[0].1);
        if history.len() > ga.generations {
            break;
        }
        let mut next: Vec<Chromosome> = ranked.iter().take(ga.elitism).map(|(c, _)| c.clone()).collect();
        while next.len() < ga.population_size {
            let a = &population[tournament(&fit, ga.tournament_size, &mut rng)];
            let b = &population[tournament(&fit, ga.tournament_size, &mut rng)];
            let mut child = if rng.gen_bool(ga.crossover_rate) { crossover(a, b, &mut rng) } else { a.clone() };
            mutate(&mut child, ga.mutation_rate, &mut rng);
            next.push(child);
        }
        population = next;
    }

    let (best, best_fitness) = ranked.swap_remove(0);
    let plan = planner.decode(&best)?;
    Ok(EvolutionReport {
        schedule: planner.materialize(&plan, Generator::Ga),
        fitness: best_fitness,
        greedy_fitness,
        best_per_generation: history,
        evaluations: eval.cache.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confirmation::ConfirmationLedger;
    use crate::domain::{DayKind, DayPlan, Meeting, MeetingStatus, ScheduleStats, Slot};
    use crate::scheduler::generate_greedy_schedule;

    fn all_idle(params: &ScheduleParameters) -> Schedule {
        let days: Vec<DayPlan> = (1..=params.horizon_days).map(DayPlan::idle).collect();
        let stats = ScheduleStats::from_days(&days, params.meetings_per_visiting_day);
        Schedule { days, stats, seed: 0, generator: Generator::Greedy }
    }

    fn meeting(client: &str, day: u32, visit: u32) -> Meeting {
        Meeting {
            meeting_id: crate::domain::meeting_id(client, visit),
            client_id: client.into(),
            day_index: day,
            slot: Slot::Am,
            visit_number: visit,
            status: MeetingStatus::Tentative,
        }
    }

    #[test]
    fn empty_schedule_scores_idle_penalty_only() {
        let params = ScheduleParameters::default();
        let f = fitness(&all_idle(&params), &[], &params, &FitnessWeights::default()).unwrap();
        assert_eq!(f, -0.5 * 360.0);
    }

    #[test]
    fn one_rank_one_client_hand_sum() {
        let params = ScheduleParameters::default();
        let roster = vec![Client::new("a", "X", Some(1), 10)];
        let mut s = all_idle(&params);
        for (day, visit) in [(1u32, 1u32), (91, 2)] {
            s.days[day as usize - 1] = DayPlan {
                day_index: day,
                kind: DayKind::Visiting { city: "X".into() },
                meetings: vec![meeting("a", day, visit)],
            };
        }
        s.stats = ScheduleStats::from_days(&s.days, 2);
        // Two visiting days with one free half-day each, 178 idle days.
        let idle_half_days = 2 + 178 * 2;
        assert_eq!(idle_half_days, 358);
        let expected = 16.0 + 16.0 + 5.0 - 0.5 * idle_half_days as f64;
        let f = fitness(&s, &roster, &params, &FitnessWeights::default()).unwrap();
        assert_eq!(f, expected);
        assert_eq!(f, -142.0);
    }

    #[test]
    fn fitness_rejects_broken_schedule() {
        let params = ScheduleParameters::default();
        let roster = vec![Client::new("a", "X", Some(1), 10)];
        let mut s = all_idle(&params);
        s.days[0].meetings.push(meeting("a", 1, 1));
        assert!(fitness(&s, &roster, &params, &FitnessWeights::default()).is_err());
    }

    #[test]
    fn weights_and_params_validate() {
        assert!(FitnessWeights::default().validate().is_ok());
        let flat = FitnessWeights { rank_weight: RankTable([1.0; 5]), ..Default::default() };
        assert!(flat.validate().is_err());
        assert!(GaParams::default().validate().is_ok());
        assert!(GaParams { elitism: 0, ..Default::default() }.validate().is_err());
        assert!(GaParams { population_size: 1, elitism: 2, ..Default::default() }.validate().is_err());
        assert!(GaParams { mutation_rate: 1.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn order_crossover_keeps_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = vec![0, 1, 2, 3, 4, 5];
            let mut b = a.clone();
            b.shuffle(&mut rng);
            let mut c = order_crossover(&a, &b, &mut rng);
            c.sort_unstable();
            assert_eq!(c, a);
        }
    }

    #[test]
    fn single_city_matches_greedy() {
        let params = ScheduleParameters::default();
        let ledger = ConfirmationLedger::new();
        let roster = vec![Client::new("a", "X", Some(2), 10)];
        let input = PlanningInput::fresh(&roster, &params, &ledger, 1);
        let greedy = generate_greedy_schedule(&input).unwrap();
        let report = evolve(&input, &FitnessWeights::default(), &GaParams::default()).unwrap();
        assert_eq!(report.schedule.days, greedy.days);
        assert_eq!(report.fitness, report.greedy_fitness);
    }

    #[test]
    fn best_per_generation_never_drops() {
        let params = ScheduleParameters::default();
        let ledger = ConfirmationLedger::new();
        let mut roster = Vec::new();
        for (i, city) in ["A", "B", "C", "D"].iter().enumerate() {
            for k in 0..3 {
                roster.push(Client::new(format!("{city}{k}"), *city, Some((i % 5 + 1) as u8), 100 * k as u64));
            }
        }
        let input = PlanningInput::fresh(&roster, &params, &ledger, 1);
        let ga = GaParams { generations: 30, seed: 9, ..Default::default() };
        let report = evolve(&input, &FitnessWeights::default(), &ga).unwrap();
        assert!(report.best_per_generation.windows(2).all(|w| w[1] >= w[0]));
        assert!(report.fitness >= report.greedy_fitness);
        let f = fitness(&report.schedule, &roster, &params, &FitnessWeights::default()).unwrap();
        assert_eq!(f, report.fitness);
    }
}
