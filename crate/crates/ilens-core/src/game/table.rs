//! Interaction tables: every multi-player pattern mapped to its interaction.

use super::{add_assign, l2_norm, max_norm, sub, CoalitionGame, GameError};
use crate::subset::Subset;
use std::collections::HashMap;

/// Map from patterns (at least two players) to their interaction vectors.
///
/// A complete table over all 2^n - n - 1 patterns satisfies the total-utility
/// decomposition up to float error; [`InteractionTable::decomposition_residual`]
/// measures exactly that.
#[derive(Debug, Clone)]
pub struct InteractionTable {
    n: usize,
    entries: HashMap<Subset, Vec<f64>>,
}

impl InteractionTable {
    pub fn new(n: usize) -> Self {
        InteractionTable {
            n,
            entries: HashMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, pattern: Subset, interaction: Vec<f64>) -> Result<(), GameError> {
        if pattern.len() < 2 {
            return Err(GameError::PatternTooSmall { len: pattern.len() });
        }
        self.entries.insert(pattern, interaction);
        Ok(())
    }

    pub fn get(&self, pattern: &Subset) -> Option<&Vec<f64>> {
        self.entries.get(pattern)
    }

    /// Patterns in a deterministic order (by size, then lexicographic).
    pub fn sorted_patterns(&self) -> Vec<&Subset> {
        let mut keys: Vec<&Subset> = self.entries.keys().collect();
        keys.sort_by_key(|s| (s.len(), s.iter().collect::<Vec<_>>()));
        keys
    }

    /// Max-norm residual of f(N) - f(empty) - sum of solo utilities - sum of
    /// all stored interactions. Near zero only when the table is complete.
    pub fn decomposition_residual(&self, game: &CoalitionGame) -> Result<f64, GameError> {
        let full = game.value(&Subset::full(game.n()));
        let empty = game.value(&Subset::empty());
        let mut residual = sub(&full, &empty);
        for i in 0..game.n() {
            add_assign(&mut residual, &game.solo_utility(i)?, -1.0);
        }
        for interaction in self.entries.values() {
            add_assign(&mut residual, interaction, -1.0);
        }
        Ok(max_norm(&residual))
    }

    /// Split the stored patterns by interaction magnitude (L2 norm of the
    /// utility vector): at or above the threshold is salient, below is
    /// inessential. The threshold is the caller's to choose.
    pub fn partition_by_magnitude(&self, threshold: f64) -> (Vec<Subset>, Vec<Subset>) {
        let mut salient = Vec::new();
        let mut inessential = Vec::new();
        for pattern in self.sorted_patterns() {
            if l2_norm(&self.entries[pattern]) >= threshold {
                salient.push(pattern.clone());
            } else {
                inessential.push(pattern.clone());
            }
        }
        (salient, inessential)
    }
}
