//! Client rating from TEU volume, TEU variation and visitor country interest.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{is_valid_rank, Client, Terminal};

/// Any TEU strictly above this volume is rank 1.
pub const RANK_ONE_TEU_THRESHOLD: u64 = 500_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RankingError {
    #[error("rank {0} out of range 1..5")]
    RankOutOfRange(u8),
    #[error("terminal {terminal_id} is owned by {owner}, not {client_id}")]
    Ownership { terminal_id: String, owner: String, client_id: String },
    #[error("invalid tier table: {0}")]
    InvalidTiers(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tier {
    pub teu_floor: u64,
    pub rank: u8,
}

/// TEU floors, best rank first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TierConfig(pub Vec<Tier>);

impl Default for TierConfig {
    fn default() -> Self {
        let tiers = [(500_001, 1), (250_001, 2), (100_001, 3), (25_001, 4), (0, 5)];
        TierConfig(tiers.iter().map(|&(teu_floor, rank)| Tier { teu_floor, rank }).collect())
    }
}

impl TierConfig {
    pub fn validate(&self) -> Result<(), RankingError> {
        let bad = |m: &str| Err(RankingError::InvalidTiers(m.to_string()));
        let Some(first) = self.0.first() else {
            return bad("no tiers");
        };
        if first.rank != 1 || first.teu_floor != RANK_ONE_TEU_THRESHOLD + 1 {
            return bad("top tier must be rank 1 from 500001 TEU");
        }
        if self.0.last().map(|t| t.teu_floor) != Some(0) {
            return bad("lowest tier must start at 0 TEU");
        }
        for pair in self.0.windows(2) {
            if pair[1].teu_floor >= pair[0].teu_floor {
                return bad("floors must strictly decrease");
            }
            if pair[1].rank <= pair[0].rank {
                return bad("ranks must strictly worsen");
            }
        }
        if self.0.iter().any(|t| !is_valid_rank(t.rank)) {
            return bad("ranks must be in 1..5");
        }
        Ok(())
    }
}

pub fn rate_from_teu(total_teu: u64, tiers: &TierConfig) -> u8 {
    tiers
        .0
        .iter()
        .find(|t| t.teu_floor <= total_teu)
        .map(|t| t.rank)
        .unwrap_or(5)
}

fn owned_terminal_teu(client: &Client, terminals: &[Terminal]) -> Result<u64, RankingError> {
    terminals.iter().try_fold(0u64, |acc, t| {
        if t.owner_client_id != client.client_id {
            return Err(RankingError::Ownership {
                terminal_id: t.terminal_id.clone(),
                owner: t.owner_client_id.clone(),
                client_id: client.client_id.clone(),
            });
        }
        Ok(acc + t.teu)
    })
}

/// Rank from the client's own TEU plus every terminal it owns.
///
/// `terminals` must all belong to `client`.
pub fn calculate_client_rate(
    client: &Client,
    terminals: &[Terminal],
    tiers: &TierConfig,
) -> Result<u8, RankingError> {
    let total = client.teu + owned_terminal_teu(client, terminals)?;
    Ok(rate_from_teu(total, tiers))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankReason {
    TeuThreshold,
    TeuIncrease,
    TeuDecrease,
    InterestCountry,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankSuggestion {
    pub client_id: String,
    pub current_rank: Option<u8>,
    pub suggested_rank: u8,
    pub reasons: Vec<RankReason>,
}

pub const DEFAULT_VARIATION_THRESHOLD_PCT: f64 = 20.0;

/// Proposes a rank from the tier table, then nudges it one step for a large
/// TEU swing and one step for an interest country.
pub fn suggest_rank_update(
    client: &Client,
    terminals: &[Terminal],
    previous_teu: u64,
    current_teu: u64,
    interest_countries: &BTreeSet<String>,
    tiers: &TierConfig,
    variation_threshold_pct: f64,
) -> Result<RankSuggestion, RankingError> {
    let base = rate_from_teu(current_teu + owned_terminal_teu(client, terminals)?, tiers);
    let mut reasons = Vec::new();
    if client.rank != Some(base) {
        reasons.push(RankReason::TeuThreshold);
    }
    let mut rank = base;
    let change_pct = if previous_teu == 0 {
        if current_teu == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (current_teu as f64 - previous_teu as f64) / previous_teu as f64 * 100.0
    };
    if change_pct >= variation_threshold_pct {
        reasons.push(RankReason::TeuIncrease);
        rank = rank.saturating_sub(1).max(1);
    } else if -change_pct >= variation_threshold_pct {
        reasons.push(RankReason::TeuDecrease);
        rank = (rank + 1).min(5);
    }
    if interest_countries.contains(&client.country) {
        reasons.push(RankReason::InterestCountry);
        rank = rank.saturating_sub(1).max(1);
    }
    Ok(RankSuggestion {
        client_id: client.client_id.clone(),
        current_rank: client.rank,
        suggested_rank: rank,
        reasons,
    })
}

pub fn apply_manual_rank(client: &Client, rank: u8) -> Result<Client, RankingError> {
    if !is_valid_rank(rank) {
        return Err(RankingError::RankOutOfRange(rank));
    }
    Ok(Client { rank: Some(rank), ..client.clone() })
}
