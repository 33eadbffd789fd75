//! Compare the greedy baseline with the genetic optimizer on a roster too big
//! for the horizon, where the choice of which visits to drop matters.
//!
//! cargo run --release --example genetic_optimizer

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use visitplan::confirmation::ConfirmationLedger;
use visitplan::domain::{Client, ScheduleParameters};
use visitplan::optimizer::{self, FitnessWeights, GaParams};
use visitplan::scheduler::PlanningInput;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let clients: Vec<Client> = (0..350)
        .map(|i| {
            let city = format!("port-{}", rng.gen_range(0..25));
            Client::new(format!("c{i:02}"), city, Some(rng.gen_range(1..=5)), rng.gen_range(0..800_000))
        })
        .collect();
    let params = ScheduleParameters::default();
    let ledger = ConfirmationLedger::new();
    let input = PlanningInput::fresh(&clients, &params, &ledger, 7);
    let weights = FitnessWeights::default();
    let ga = GaParams { seed: 7, ..Default::default() };

    let report = optimizer::evolve(&input, &weights, &ga).unwrap();
    println!("greedy fitness {:.1}", report.greedy_fitness);
    println!("ga fitness     {:.1} after {} evaluations", report.fitness, report.evaluations);
    for (g, f) in report.best_per_generation.iter().enumerate().step_by(10) {
        println!("  generation {g:>3}: {f:.1}");
    }
    let s = &report.schedule.stats;
    println!("visiting {} travel {} idle {} cities {}", s.tvd, s.ttd, s.idle, s.n_cities);
}
