//! Rank a few clients from TEU, terminals and visitor interest.
//!
//! cargo run --example ranking

use std::collections::BTreeSet;

use visitplan::domain::{Client, Terminal};
use visitplan::ranking::{self, TierConfig};

fn main() {
    let tiers = TierConfig::default();
    let client = Client::new("maersk-br", "Santos", Some(3), 180_000);
    let terminal = Terminal {
        terminal_id: "stos-1".into(),
        name: "Santos Quay".into(),
        owner_client_id: "maersk-br".into(),
        city: "Santos".into(),
        country: "BR".into(),
        teu: 350_000,
    };

    for teu in [10_000, 100_000, 250_001, 500_000, 500_001] {
        println!("{teu:>7} TEU -> rank {}", ranking::rate_from_teu(teu, &tiers));
    }

    let with_terminal = ranking::calculate_client_rate(&client, std::slice::from_ref(&terminal), &tiers).unwrap();
    println!("{} with its terminal: rank {with_terminal}", client.client_id);

    let interest: BTreeSet<String> = ["BR".to_string()].into();
    let mut local = client.clone();
    local.country = "BR".into();
    let s = ranking::suggest_rank_update(&local, &[], 100_000, 180_000, &interest, &tiers, 20.0).unwrap();
    println!("suggestion: {:?} -> {} because {:?}", s.current_rank, s.suggested_rank, s.reasons);

    match ranking::apply_manual_rank(&client, 7) {
        Ok(_) => unreachable!(),
        Err(e) => println!("manual rank 7 rejected: {e}"),
    }
}
