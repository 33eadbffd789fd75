//! Retain an evaluated schedule, then retrieve it for a similar roster and
//! reuse its city order.
//!
//! cargo run --example case_memory

use visitplan::casebook::{self, Case, CaseBase, CaseDescriptor, Evaluation};
use visitplan::confirmation::ConfirmationLedger;
use visitplan::domain::{Client, ScheduleParameters};
use visitplan::scheduler::{self, PlanningInput};

fn main() {
    let params = ScheduleParameters::default();
    let cities = ["Santos", "Manaus", "Recife", "Belem"];
    let quarter_one: Vec<Client> = (0..30)
        .map(|i| Client::new(format!("c{i:02}"), cities[i % 4], Some((i % 5) as u8 + 1), 10_000 * i as u64))
        .collect();
    let schedule =
        scheduler::generate_greedy_schedule(&PlanningInput::fresh(&quarter_one, &params, &ConfirmationLedger::new(), 0))
            .unwrap();

    let descriptor = CaseDescriptor::from_roster(&quarter_one, &params);
    let evaluation = Evaluation::of_schedule(&schedule, &quarter_one, &params);
    let case = casebook::revise(&Case::new(descriptor, schedule), evaluation, "");
    let base = casebook::retain(&CaseBase::new(), case).unwrap();
    println!("retained {} as {:?}", base.cases()[0].case_id, base.cases()[0].outcome);

    let mut quarter_two = quarter_one.clone();
    quarter_two.push(Client::new("late", "Recife", Some(3), 30_000));
    let query = CaseDescriptor::from_roster(&quarter_two, &params);
    match casebook::retrieve_reusable(&base, &query, casebook::DEFAULT_SIMILARITY_THRESHOLD) {
        Some((hit, score)) => {
            println!("closest case {} at similarity {score:.3}", hit.case_id);
            println!("reused city order {:?}", casebook::reuse(hit, &quarter_two).unwrap());
        }
        None => println!("nothing similar enough"),
    }
}
