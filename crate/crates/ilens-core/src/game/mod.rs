//! Cooperative-game computations over an abstract value function.
//!
//! A [`CoalitionGame`] wraps a deterministic value function f mapping player
//! subsets to utility vectors. On top of it this module provides marginal
//! utilities, exact and permutation-sampled Shapley values, the multi-variate
//! interaction of a pattern (both its recursive definition and its
//! alternating-sum closed form), and residual checks for the two identities
//! that tie everything together: the decomposition of the total utility into
//! interactions, and the expansion of a marginal utility into the
//! interactions of its sub-patterns.
//!
//! All arithmetic is 64-bit. Exact enumerations use `u64` masks internally
//! and are capped so oracle runs stay in the seconds range.

mod memo;
mod synthetic;
mod table;

pub use synthetic::{
    additive_game, and_game, linear_combination, random_game, ConjunctionGame, GameSpecError,
};
pub use table::InteractionTable;

use crate::subset::Subset;
use memo::BoundedMemo;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use thiserror::Error;

/// Exact Shapley enumeration walks all 2^(n-1) contexts.
pub const SHAPLEY_EXACT_MAX_PLAYERS: usize = 16;
/// The decomposition check touches every (pattern, sub-pattern) pair: 3^n terms.
pub const DECOMPOSITION_MAX_PLAYERS: usize = 14;
/// The marginal-utility identity enumerates 3^|L| context pairs.
pub const DELTA_IDENTITY_MAX_CONTEXT: usize = 12;
/// Interaction enumeration walks 2^|S| subsets of the pattern.
pub const INTERACTION_MAX_PATTERN: usize = 24;
/// Default bound on cached value-function results.
pub const DEFAULT_MEMO_CAPACITY: usize = 1 << 20;

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("player {player} out of range for a {n}-player game")]
    PlayerOutOfRange { player: usize, n: usize },
    #[error("player {player} must not be part of its own context")]
    PlayerInContext { player: usize },
    #[error("pattern must contain at least 2 players, got {len}")]
    PatternTooSmall { len: usize },
    #[error("{op} supports at most {cap} players, got {n}; use the sampled estimator")]
    TooManyPlayers {
        op: &'static str,
        n: usize,
        cap: usize,
    },
    #[error("context of size {len} exceeds the {cap}-player cap")]
    ContextTooLarge { len: usize, cap: usize },
    #[error("permutation count must be at least 1")]
    NoPermutations,
    #[error("value function must map to at least one dimension")]
    ZeroDimension,
    #[error("game needs at least one player")]
    NoPlayers,
    #[error("utility dimensions disagree: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

type ValueFn = dyn Fn(&Subset) -> Vec<f64> + Send + Sync;

/// A deterministic value function over subsets of `n` players, with a bounded
/// cache of previously evaluated subsets.
///
/// Concurrent calls are safe whenever the wrapped function is; the cache is
/// internally locked and hits return bit-identical vectors because the value
/// function itself is required to be deterministic.
pub struct CoalitionGame {
    n: usize,
    d: usize,
    value: Arc<ValueFn>,
    memo: Mutex<BoundedMemo<Subset, Arc<Vec<f64>>>>,
}

impl CoalitionGame {
    pub fn new<F>(n: usize, value: F) -> Result<Self, GameError>
    where
        F: Fn(&Subset) -> Vec<f64> + Send + Sync + 'static,
    {
        Self::with_memo_capacity(n, value, DEFAULT_MEMO_CAPACITY)
    }

    pub fn with_memo_capacity<F>(n: usize, value: F, capacity: usize) -> Result<Self, GameError>
    where
        F: Fn(&Subset) -> Vec<f64> + Send + Sync + 'static,
    {
        if n == 0 {
            return Err(GameError::NoPlayers);
        }
        let d = value(&Subset::empty()).len();
        if d == 0 {
            return Err(GameError::ZeroDimension);
        }
        Ok(CoalitionGame {
            n,
            d,
            value: Arc::new(value),
            memo: Mutex::new(BoundedMemo::new(capacity)),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Dimension of the utility vectors.
    pub fn d(&self) -> usize {
        self.d
    }

    /// f(S), cached.
    pub fn value(&self, subset: &Subset) -> Arc<Vec<f64>> {
        if let Some(hit) = self.memo.lock().unwrap().get(subset) {
            return hit;
        }
        let computed = Arc::new((self.value)(subset));
        self.memo
            .lock()
            .unwrap()
            .insert(subset.clone(), computed.clone());
        computed
    }

    fn value_mask(&self, mask: u64) -> Arc<Vec<f64>> {
        self.value(&Subset::from_mask(mask))
    }

    fn check_player(&self, player: usize) -> Result<(), GameError> {
        if player >= self.n {
            return Err(GameError::PlayerOutOfRange { player, n: self.n });
        }
        Ok(())
    }

    fn check_context(&self, player: usize, context: &Subset) -> Result<(), GameError> {
        self.check_player(player)?;
        if context.contains(player) {
            return Err(GameError::PlayerInContext { player });
        }
        if let Some(max) = context.max_player() {
            if max >= self.n {
                return Err(GameError::PlayerOutOfRange {
                    player: max,
                    n: self.n,
                });
            }
        }
        Ok(())
    }

    /// v({i}) = f({i}) - f(empty).
    pub fn solo_utility(&self, player: usize) -> Result<Vec<f64>, GameError> {
        self.check_player(player)?;
        let with = self.value(&Subset::singleton(player));
        let without = self.value(&Subset::empty());
        Ok(sub(&with, &without))
    }

    /// f(L u {i}) - f(L): the marginal utility of adding `player` to `context`.
    pub fn marginal_utility(
        &self,
        player: usize,
        context: &Subset,
    ) -> Result<Vec<f64>, GameError> {
        self.check_context(player, context)?;
        let with = self.value(&context.with(player));
        let without = self.value(context);
        Ok(sub(&with, &without))
    }

    /// Exact Shapley value of `player`: the factorial-weighted average of its
    /// marginal utility over every context drawn from the other players.
    pub fn shapley_exact(&self, player: usize) -> Result<Vec<f64>, GameError> {
        self.check_player(player)?;
        if self.n > SHAPLEY_EXACT_MAX_PLAYERS {
            return Err(GameError::TooManyPlayers {
                op: "shapley_exact",
                n: self.n,
                cap: SHAPLEY_EXACT_MAX_PLAYERS,
            });
        }
        let fact = factorials(self.n);
        let rest = full_mask(self.n) & !(1u64 << player);
        let mut acc = vec![0.0; self.d];
        for context in submasks(rest) {
            let l = context.count_ones() as usize;
            let weight = fact[self.n - l - 1] * fact[l] / fact[self.n];
            let with = self.value_mask(context | (1 << player));
            let without = self.value_mask(context);
            for k in 0..self.d {
                acc[k] += weight * (with[k] - without[k]);
            }
        }
        Ok(acc)
    }

    /// Monte-Carlo Shapley estimate: averages the marginal utility of
    /// `player` over its predecessors in uniformly sampled orderings.
    /// Unbiased for [`shapley_exact`] and deterministic for a fixed seed.
    pub fn shapley_sample(
        &self,
        player: usize,
        permutations: usize,
        rng_seed: u64,
    ) -> Result<Vec<f64>, GameError> {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        self.check_player(player)?;
        if permutations == 0 {
            return Err(GameError::NoPermutations);
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
        let mut order: Vec<usize> = (0..self.n).collect();
        let mut acc = vec![0.0; self.d];
        for _ in 0..permutations {
            order.shuffle(&mut rng);
            let position = order.iter().position(|&p| p == player).unwrap();
            let context = Subset::from_indices(order[..position].iter().copied());
            let with = self.value(&context.with(player));
            let without = self.value(&context);
            for k in 0..self.d {
                acc[k] += with[k] - without[k];
            }
        }
        let scale = 1.0 / permutations as f64;
        for a in &mut acc {
            *a *= scale;
        }
        Ok(acc)
    }

    /// Interaction of the pattern `S` by its recursive definition: the joint
    /// utility of S minus every smaller pattern's interaction and every solo
    /// utility, computed bottom-up over the sub-patterns of S.
    pub fn interaction_recursive(&self, pattern: &Subset) -> Result<Vec<f64>, GameError> {
        let indices = self.checked_pattern(pattern)?;
        let s = indices.len();
        let empty = self.value(&Subset::empty());
        let solo: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| sub(&self.value(&Subset::singleton(i)), &empty))
            .collect();

        // local masks index into `indices`; iterate by ascending popcount so
        // every proper sub-pattern is already available
        let mut table: HashMap<u64, Vec<f64>> = HashMap::new();
        let mut masks: Vec<u64> = (0u64..(1 << s)).filter(|m| m.count_ones() >= 2).collect();
        masks.sort_by_key(|m| m.count_ones());
        for mask in masks {
            let members = self.globalize(&indices, mask);
            let mut acc = sub(&self.value(&members), &empty);
            for sub_mask in proper_submasks(mask) {
                if sub_mask.count_ones() >= 2 {
                    add_assign(&mut acc, &table[&sub_mask], -1.0);
                }
            }
            for bit in bits(mask) {
                add_assign(&mut acc, &solo[bit], -1.0);
            }
            table.insert(mask, acc);
        }
        Ok(table.remove(&(((1u64 << s) - 1) as u64)).unwrap())
    }

    /// Interaction of the pattern `S` in closed form: the alternating sum of
    /// f over all subsets of S.
    pub fn interaction_closed_form(&self, pattern: &Subset) -> Result<Vec<f64>, GameError> {
        let indices = self.checked_pattern(pattern)?;
        let s = indices.len();
        let mut acc = vec![0.0; self.d];
        for mask in 0u64..(1 << s) {
            let l = mask.count_ones() as usize;
            let sign = if (s - l) % 2 == 0 { 1.0 } else { -1.0 };
            let members = self.globalize(&indices, mask);
            add_assign(&mut acc, &self.value(&members), sign);
        }
        Ok(acc)
    }

    /// Table of every interaction (all patterns with at least two players),
    /// computed in closed form.
    pub fn interaction_table(&self) -> Result<InteractionTable, GameError> {
        if self.n > DECOMPOSITION_MAX_PLAYERS {
            return Err(GameError::TooManyPlayers {
                op: "interaction_table",
                n: self.n,
                cap: DECOMPOSITION_MAX_PLAYERS,
            });
        }
        let mut table = InteractionTable::new(self.n);
        for mask in 0u64..=full_mask(self.n) {
            if mask.count_ones() >= 2 {
                let pattern = Subset::from_mask(mask);
                let interaction = self.interaction_closed_form(&pattern)?;
                table.insert(pattern, interaction)?;
            }
        }
        Ok(table)
    }

    /// Max-norm residual of the total-utility decomposition: f(N) - f(empty)
    /// minus all solo utilities minus all interactions should vanish.
    pub fn efficiency_decomposition_residual(&self) -> Result<f64, GameError> {
        if self.n > DECOMPOSITION_MAX_PLAYERS {
            return Err(GameError::TooManyPlayers {
                op: "efficiency_decomposition_check",
                n: self.n,
                cap: DECOMPOSITION_MAX_PLAYERS,
            });
        }
        let table = self.interaction_table()?;
        table.decomposition_residual(self)
    }

    /// Max-norm residual of the marginal-utility identity: Delta f(i, L)
    /// minus v({i}) minus the interactions of every non-empty L' in L joined
    /// with i should vanish.
    pub fn delta_identity_residual(
        &self,
        player: usize,
        context: &Subset,
    ) -> Result<f64, GameError> {
        self.check_context(player, context)?;
        let l = context.len();
        if l > DELTA_IDENTITY_MAX_CONTEXT {
            return Err(GameError::ContextTooLarge {
                len: l,
                cap: DELTA_IDENTITY_MAX_CONTEXT,
            });
        }
        let mut residual = self.marginal_utility(player, context)?;
        add_assign(&mut residual, &self.solo_utility(player)?, -1.0);
        let indices: Vec<usize> = context.iter().collect();
        for mask in 1u64..(1 << l) {
            let mut joined = self.globalize(&indices, mask);
            joined.insert(player);
            let interaction = self.interaction_closed_form(&joined)?;
            add_assign(&mut residual, &interaction, -1.0);
        }
        Ok(max_norm(&residual))
    }

    fn checked_pattern(&self, pattern: &Subset) -> Result<Vec<usize>, GameError> {
        let indices: Vec<usize> = pattern.iter().collect();
        if indices.len() < 2 {
            return Err(GameError::PatternTooSmall {
                len: indices.len(),
            });
        }
        if indices.len() > INTERACTION_MAX_PATTERN {
            return Err(GameError::TooManyPlayers {
                op: "interaction",
                n: indices.len(),
                cap: INTERACTION_MAX_PATTERN,
            });
        }
        if let Some(&max) = indices.last() {
            if max >= self.n {
                return Err(GameError::PlayerOutOfRange {
                    player: max,
                    n: self.n,
                });
            }
        }
        Ok(indices)
    }

    fn globalize(&self, indices: &[usize], local_mask: u64) -> Subset {
        Subset::from_indices(bits(local_mask).map(|b| indices[b]))
    }
}

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn add_assign(acc: &mut [f64], v: &[f64], scale: f64) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += scale * x;
    }
}

pub(crate) fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn factorials(n: usize) -> Vec<f64> {
    let mut fact = vec![1.0; n + 1];
    for i in 1..=n {
        fact[i] = fact[i - 1] * i as f64;
    }
    fact
}

fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// All submasks of `mask`, including the empty mask and `mask` itself.
fn submasks(mask: u64) -> impl Iterator<Item = u64> {
    let mut current = 0u64;
    let mut done = false;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = current;
        if current == mask {
            done = true;
        } else {
            current = (current.wrapping_sub(mask)) & mask;
        }
        Some(out)
    })
}

fn proper_submasks(mask: u64) -> impl Iterator<Item = u64> {
    submasks(mask).filter(move |&m| m != mask)
}

fn bits(mask: u64) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let b = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(b)
        }
    })
}
