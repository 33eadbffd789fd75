//! Confirm one meeting, deny another and regenerate from the denial day on.
//!
//! cargo run --example confirmation_regeneration

use visitplan::confirmation::{self, ConfirmationLedger, RegenerationStrategy, Response};
use visitplan::domain::{Client, ScheduleParameters};
use visitplan::scheduler::{self, PlanningInput};

fn main() {
    let clients = vec![
        Client::new("acme", "Santos", Some(1), 620_000),
        Client::new("bolt", "Santos", Some(2), 120_000),
        Client::new("cargo", "Santos", Some(3), 90_000),
        Client::new("delta", "Manaus", Some(2), 210_000),
        Client::new("esker", "Manaus", Some(3), 40_000),
    ];
    let params = ScheduleParameters::default();
    let mut ledger = ConfirmationLedger::new();
    let schedule = scheduler::generate_greedy_schedule(&PlanningInput::fresh(&clients, &params, &ledger, 0)).unwrap();
    ledger.register_schedule(&schedule);

    let acme = schedule.find_meeting("acme.v1").unwrap().clone();
    ledger = confirmation::record_response(&ledger, "acme", 1, Response::Confirmed, acme.day_index).unwrap();
    let delta = schedule.find_meeting("delta.v1").unwrap().clone();
    ledger = confirmation::record_response(&ledger, "delta", 1, Response::Denied, delta.day_index).unwrap();

    let after = confirmation::regenerate_from(
        &schedule,
        &clients,
        &params,
        &ledger,
        delta.day_index,
        0,
        &RegenerationStrategy::Greedy,
    )
    .unwrap();
    let summary = confirmation::summarize_changes(&schedule, &after, delta.day_index);
    println!("denied delta.v1 on day {}", delta.day_index);
    println!("first changed day: {:?}", summary.first_changed_day);
    println!("moved {:?}", summary.meetings_moved);
    println!("dropped {:?}", summary.meetings_dropped);

    let again = confirmation::record_response(&ledger, "delta", 1, Response::Confirmed, delta.day_index);
    println!("confirming a denied meeting: {}", again.unwrap_err());
}
