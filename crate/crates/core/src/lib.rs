//! Visit scheduling for a shipping-line sales team.
//!
//! Clients are ranked 1 to 5 from their container volume. A visitor then
//! spends a 180 working-day horizon touring client cities, two meetings a
//! day. Rank 1 clients get two visits, one in each half of the horizon.
//!
//! Start with the examples:
//!
//! ```text
//! examples/
//! ├── ranking.rs                    # TEU tiers, terminals, suggestions
//! ├── greedy_schedule.rs            # priority-ordered baseline schedule
//! ├── genetic_optimizer.rs          # GA over city order and packing
//! ├── confirmation_regeneration.rs  # confirm, deny, regenerate the tail
//! ├── case_memory.rs                # retain, retrieve and reuse past plans
//! ├── ingest_snapshot.rs            # CSV roster in, snapshot out, reopen
//! └── http_service.rs               # the /api/v1 JSON service
//! ```
//!
//! ```bash
//! cargo run --example greedy_schedule
//! cargo run --release --example genetic_optimizer
//! ```
//!
//! [`engine::Engine`] ties the pieces together behind one mutation type.
//! The `visitplan` binary wraps it as a command line ([`cli`]) and an HTTP
//! service ([`service`]).

pub mod casebook;
pub mod config;
pub mod confirmation;
pub mod domain;
pub mod engine;
pub mod error;
pub mod optimizer;
pub mod ranking;
pub mod scheduler;
pub mod store;
pub mod cli;
pub mod service;
