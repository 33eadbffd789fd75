//! Build the greedy baseline for a small roster and print it day by day.
//!
//! cargo run --example greedy_schedule

use visitplan::confirmation::ConfirmationLedger;
use visitplan::domain::{Client, DayKind, ScheduleParameters};
use visitplan::scheduler::{self, PlanningInput};

fn roster() -> Vec<Client> {
    vec![
        Client::new("acme", "Santos", Some(1), 620_000),
        Client::new("bolt", "Santos", Some(2), 120_000),
        Client::new("cargo", "Santos", Some(4), 9_000),
        Client::new("delta", "Manaus", Some(1), 510_000),
        Client::new("esker", "Manaus", Some(3), 40_000),
        Client::new("fjord", "Recife", Some(2), 75_000),
        Client::new("gale", "Recife", Some(5), 1_000),
    ]
}

fn main() {
    let clients = roster();
    let params = ScheduleParameters::default();
    let ledger = ConfirmationLedger::new();

    let budget = scheduler::budget_check(&clients, &params).unwrap();
    println!("required {} visiting days, {} travel, fits: {}", budget.total_required_days, budget.travel_days, budget.fits);

    let schedule = scheduler::generate_greedy_schedule(&PlanningInput::fresh(&clients, &params, &ledger, 0)).unwrap();
    for day in &schedule.days {
        match &day.kind {
            DayKind::Idle => continue,
            DayKind::Travel { from_city, to_city } => println!("day {:>3}  travel {from_city} -> {to_city}", day.day_index),
            DayKind::Visiting { city } => {
                let ids: Vec<&str> = day.meetings.iter().map(|m| m.meeting_id.as_str()).collect();
                println!("day {:>3}  {city:<8} {}", day.day_index, ids.join(", "));
            }
        }
    }
    let s = &schedule.stats;
    println!("visiting {} travel {} idle {} (sum {})", s.tvd, s.ttd, s.idle, s.tvd + s.ttd + s.idle);
}
