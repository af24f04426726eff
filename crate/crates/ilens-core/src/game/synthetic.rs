//! Synthetic games: weighted conjunctions, additive games, random tables.

use super::{CoalitionGame, GameError};
use crate::subset::Subset;
use rand::{Rng, SeedableRng};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GameSpecError {
    #[error("line {line}: expected `weight: p1,p2,...`")]
    BadLine { line: usize },
    #[error("line {line}: bad number `{token}`")]
    BadNumber { line: usize, token: String },
    #[error("no conjunctions found")]
    Empty,
}

/// A game defined by weighted conjunctions: the value of a coalition is the
/// sum of the weights of every conjunction fully contained in it.
///
/// Text form, one conjunction per line, `#` comments allowed:
///
/// ```text
/// # two-player AND plus a solo bonus
/// 1.0: 0,1
/// 0.5: 2
/// ```
#[derive(Debug, Clone)]
pub struct ConjunctionGame {
    n: usize,
    terms: Vec<(f64, Subset)>,
}

impl ConjunctionGame {
    pub fn new(terms: Vec<(f64, Subset)>) -> Result<Self, GameSpecError> {
        if terms.is_empty() {
            return Err(GameSpecError::Empty);
        }
        let n = terms
            .iter()
            .filter_map(|(_, s)| s.max_player())
            .max()
            .map_or(1, |m| m + 1);
        Ok(ConjunctionGame { n, terms })
    }

    pub fn parse(text: &str) -> Result<Self, GameSpecError> {
        let mut terms = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.split('#').next().unwrap_or("").trim();
            if trimmed.is_empty() {
                continue;
            }
            let (weight_str, players_str) = trimmed
                .split_once(':')
                .ok_or(GameSpecError::BadLine { line })?;
            let weight: f64 =
                weight_str
                    .trim()
                    .parse()
                    .map_err(|_| GameSpecError::BadNumber {
                        line,
                        token: weight_str.trim().to_string(),
                    })?;
            let mut members = Subset::empty();
            for token in players_str.split(',') {
                let token = token.trim();
                if token.is_empty() {
                    return Err(GameSpecError::BadLine { line });
                }
                let player: usize = token.parse().map_err(|_| GameSpecError::BadNumber {
                    line,
                    token: token.to_string(),
                })?;
                members.insert(player);
            }
            if members.is_empty() {
                return Err(GameSpecError::BadLine { line });
            }
            terms.push((weight, members));
        }
        ConjunctionGame::new(terms)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self, coalition: &Subset) -> f64 {
        self.terms
            .iter()
            .filter(|(_, members)| members.is_subset_of(coalition))
            .map(|(w, _)| w)
            .sum()
    }

    pub fn into_game(self) -> CoalitionGame {
        let n = self.n;
        CoalitionGame::new(n, move |s: &Subset| vec![self.value(s)])
            .expect("conjunction games are scalar over at least one player")
    }
}

/// value(L) = sum of the weights of the players in L; no interactions at all.
pub fn additive_game(weights: Vec<f64>) -> CoalitionGame {
    let n = weights.len();
    CoalitionGame::new(n, move |s: &Subset| {
        vec![s.iter().map(|i| weights[i]).sum()]
    })
    .expect("additive game over at least one player")
}

/// value(L) = 1 iff every listed member is in L.
pub fn and_game(n: usize, members: &[usize]) -> CoalitionGame {
    let members = Subset::from_indices(members.iter().copied());
    CoalitionGame::new(n, move |s: &Subset| {
        vec![if members.is_subset_of(s) { 1.0 } else { 0.0 }]
    })
    .expect("AND game over at least one player")
}

/// A game backed by a full lookup table with utilities drawn uniformly from
/// [-1, 1], d values per subset. Deterministic per seed. Capped at 20
/// players (the table holds 2^n entries).
pub fn random_game(n: usize, d: usize, seed: u64) -> Result<CoalitionGame, GameError> {
    const CAP: usize = 20;
    if n > CAP {
        return Err(GameError::TooManyPlayers {
            op: "random_game",
            n,
            cap: CAP,
        });
    }
    if n == 0 {
        return Err(GameError::NoPlayers);
    }
    if d == 0 {
        return Err(GameError::ZeroDimension);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let table: Vec<Vec<f64>> = (0..(1usize << n))
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .collect();
    CoalitionGame::new(n, move |s: &Subset| table[s.to_mask() as usize].clone())
}

/// Weighted sum of games sharing the same player count and dimension.
pub fn linear_combination(
    parts: Vec<(f64, Arc<CoalitionGame>)>,
) -> Result<CoalitionGame, GameError> {
    let first = parts.first().ok_or(GameError::NoPlayers)?;
    let (n, d) = (first.1.n(), first.1.d());
    for (_, game) in &parts {
        if game.n() != n {
            return Err(GameError::PlayerOutOfRange {
                player: game.n(),
                n,
            });
        }
        if game.d() != d {
            return Err(GameError::DimensionMismatch {
                left: d,
                right: game.d(),
            });
        }
    }
    CoalitionGame::new(n, move |s: &Subset| {
        let mut acc = vec![0.0; d];
        for (coeff, game) in &parts {
            let v = game.value(s);
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += coeff * x;
            }
        }
        acc
    })
}
