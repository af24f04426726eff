//! Player subsets as packed bit sets.
//!
//! Membership tests and unions are O(1)/O(words). Exact enumeration code for
//! small games works on raw `u64` masks and only crosses into [`Subset`] at
//! the value-function boundary; sampled paths over image grids (hundreds of
//! cells) use the multi-word representation directly.

use std::fmt;

/// A set of player indices.
///
/// The word vector is kept trimmed (no trailing zero words) so equal sets
/// compare and hash equal regardless of how they were built.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct Subset {
    words: Vec<u64>,
}

impl Subset {
    pub fn empty() -> Self {
        Subset { words: Vec::new() }
    }

    /// The full set {0..n-1}.
    pub fn full(n: usize) -> Self {
        let mut words = vec![u64::MAX; n / 64];
        if n % 64 != 0 {
            words.push((1u64 << (n % 64)) - 1);
        }
        let mut s = Subset { words };
        s.trim();
        s
    }

    pub fn singleton(player: usize) -> Self {
        let mut s = Subset::empty();
        s.insert(player);
        s
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut s = Subset::empty();
        for i in indices {
            s.insert(i);
        }
        s
    }

    /// Interpret a single word as the subset of players 0..64.
    pub fn from_mask(mask: u64) -> Self {
        let mut s = Subset { words: vec![mask] };
        s.trim();
        s
    }

    /// Lowest 64 players as a mask; only valid when no player >= 64 is present.
    pub fn to_mask(&self) -> u64 {
        debug_assert!(self.words.len() <= 1);
        self.words.first().copied().unwrap_or(0)
    }

    pub fn contains(&self, player: usize) -> bool {
        let (w, b) = (player / 64, player % 64);
        self.words.get(w).map_or(false, |word| word & (1 << b) != 0)
    }

    pub fn insert(&mut self, player: usize) {
        let (w, b) = (player / 64, player % 64);
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << b;
    }

    pub fn remove(&mut self, player: usize) {
        let (w, b) = (player / 64, player % 64);
        if let Some(word) = self.words.get_mut(w) {
            *word &= !(1 << b);
        }
        self.trim();
    }

    pub fn with(&self, player: usize) -> Self {
        let mut s = self.clone();
        s.insert(player);
        s
    }

    pub fn without(&self, player: usize) -> Self {
        let mut s = self.clone();
        s.remove(player);
        s
    }

    pub fn union(&self, other: &Subset) -> Self {
        let (longer, shorter) = if self.words.len() >= other.words.len() {
            (self, other)
        } else {
            (other, self)
        };
        let mut words = longer.words.clone();
        for (w, o) in words.iter_mut().zip(&shorter.words) {
            *w |= o;
        }
        Subset { words }
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.words
            .iter()
            .enumerate()
            .all(|(i, w)| w & !other.words.get(i).copied().unwrap_or(0) == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Largest contained player, if any.
    pub fn max_player(&self) -> Option<usize> {
        let word = self.words.last()?;
        Some((self.words.len() - 1) * 64 + (63 - word.leading_zeros() as usize))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }

    fn trim(&mut self) {
        while self.words.last() == Some(&0) {
            self.words.pop();
        }
    }
}

impl FromIterator<usize> for Subset {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Subset::from_indices(iter)
    }
}

impl fmt::Debug for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_membership() {
        let s = Subset::from_indices([0, 5, 63, 64, 200]);
        assert_eq!(s.len(), 5);
        for p in [0, 5, 63, 64, 200] {
            assert!(s.contains(p));
        }
        assert!(!s.contains(1));
        assert!(!s.contains(199));
        assert_eq!(s.max_player(), Some(200));
    }

    #[test]
    fn canonical_after_remove() {
        let mut a = Subset::from_indices([3, 130]);
        a.remove(130);
        let b = Subset::singleton(3);
        assert_eq!(a, b);
        use std::collections::hash_map::DefaultHasher;
        use std::hash::{Hash, Hasher};
        let hash = |s: &Subset| {
            let mut h = DefaultHasher::new();
            s.hash(&mut h);
            h.finish()
        };
        assert_eq!(hash(&a), hash(&b));
    }

    #[test]
    fn full_set() {
        let s = Subset::full(70);
        assert_eq!(s.len(), 70);
        assert!(s.contains(69));
        assert!(!s.contains(70));
        assert!(Subset::full(0).is_empty());
    }

    #[test]
    fn mask_roundtrip() {
        let s = Subset::from_mask(0b1011);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 1, 3]);
        assert_eq!(s.to_mask(), 0b1011);
    }

    proptest! {
        #[test]
        fn iter_roundtrip(indices in proptest::collection::btree_set(0usize..300, 0..40)) {
            let s = Subset::from_indices(indices.iter().copied());
            prop_assert_eq!(s.iter().collect::<Vec<_>>(), indices.iter().copied().collect::<Vec<_>>());
            prop_assert_eq!(s.len(), indices.len());
        }

        #[test]
        fn union_contains_both(a in proptest::collection::btree_set(0usize..200, 0..20),
                               b in proptest::collection::btree_set(0usize..200, 0..20)) {
            let sa = Subset::from_indices(a.iter().copied());
            let sb = Subset::from_indices(b.iter().copied());
            let u = sa.union(&sb);
            for &p in a.iter().chain(b.iter()) {
                prop_assert!(u.contains(p));
            }
            prop_assert!(sa.is_subset_of(&u) && sb.is_subset_of(&u));
            prop_assert_eq!(u.len(), a.union(&b).count());
        }
    }
}
