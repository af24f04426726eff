//! Bounded LRU cache for value-function results.
//!
//! Interaction recursion re-evaluates subsets combinatorially, so coalition
//! games cache f(S) keyed by subset. The cache is capacity-bounded: once full
//! the least recently touched entry is evicted.

use std::collections::HashMap;
use std::hash::Hash;

const NIL: usize = usize::MAX;

struct Node<K, V> {
    key: K,
    value: V,
    prev: usize,
    next: usize,
}

pub struct BoundedMemo<K, V> {
    map: HashMap<K, usize>,
    nodes: Vec<Node<K, V>>,
    head: usize,
    tail: usize,
    free: Vec<usize>,
    capacity: usize,
}

impl<K: Clone + Eq + Hash, V: Clone> BoundedMemo<K, V> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "memo capacity must be positive");
        BoundedMemo {
            map: HashMap::new(),
            nodes: Vec::new(),
            head: NIL,
            tail: NIL,
            free: Vec::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn get(&mut self, key: &K) -> Option<V> {
        let slot = *self.map.get(key)?;
        self.detach(slot);
        self.push_front(slot);
        Some(self.nodes[slot].value.clone())
    }

    pub fn insert(&mut self, key: K, value: V) {
        if let Some(&slot) = self.map.get(&key) {
            self.nodes[slot].value = value;
            self.detach(slot);
            self.push_front(slot);
            return;
        }
        if self.map.len() >= self.capacity {
            let victim = self.tail;
            self.detach(victim);
            let node = &mut self.nodes[victim];
            self.map.remove(&node.key);
            node.key = key.clone();
            node.value = value;
            self.map.insert(key, victim);
            self.push_front(victim);
            return;
        }
        let slot = if let Some(slot) = self.free.pop() {
            let node = &mut self.nodes[slot];
            node.key = key.clone();
            node.value = value;
            slot
        } else {
            self.nodes.push(Node {
                key: key.clone(),
                value,
                prev: NIL,
                next: NIL,
            });
            self.nodes.len() - 1
        };
        self.map.insert(key, slot);
        self.push_front(slot);
    }

    fn detach(&mut self, slot: usize) {
        let (prev, next) = (self.nodes[slot].prev, self.nodes[slot].next);
        if prev != NIL {
            self.nodes[prev].next = next;
        } else if self.head == slot {
            self.head = next;
        }
        if next != NIL {
            self.nodes[next].prev = prev;
        } else if self.tail == slot {
            self.tail = prev;
        }
        self.nodes[slot].prev = NIL;
        self.nodes[slot].next = NIL;
    }

    fn push_front(&mut self, slot: usize) {
        self.nodes[slot].next = self.head;
        self.nodes[slot].prev = NIL;
        if self.head != NIL {
            self.nodes[self.head].prev = slot;
        }
        self.head = slot;
        if self.tail == NIL {
            self.tail = slot;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_and_get() {
        let mut memo = BoundedMemo::new(4);
        memo.insert(1, "a");
        memo.insert(2, "b");
        assert_eq!(memo.get(&1), Some("a"));
        assert_eq!(memo.get(&3), None);
        assert_eq!(memo.len(), 2);
    }

    #[test]
    fn evicts_least_recently_used() {
        let mut memo = BoundedMemo::new(2);
        memo.insert(1, 10);
        memo.insert(2, 20);
        memo.get(&1); // 2 is now the LRU entry
        memo.insert(3, 30);
        assert_eq!(memo.get(&2), None);
        assert_eq!(memo.get(&1), Some(10));
        assert_eq!(memo.get(&3), Some(30));
        assert_eq!(memo.len(), 2);
    }

    #[test]
    fn overwrite_refreshes() {
        let mut memo = BoundedMemo::new(2);
        memo.insert(1, 10);
        memo.insert(2, 20);
        memo.insert(1, 11); // refreshes 1; 2 becomes LRU
        memo.insert(3, 30);
        assert_eq!(memo.get(&1), Some(11));
        assert_eq!(memo.get(&2), None);
    }

    #[test]
    fn capacity_one() {
        let mut memo = BoundedMemo::new(1);
        for i in 0..10 {
            memo.insert(i, i * 2);
            assert_eq!(memo.get(&i), Some(i * 2));
            assert_eq!(memo.len(), 1);
        }
    }
}
