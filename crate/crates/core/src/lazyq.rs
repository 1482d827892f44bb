//! Priority-queue entry for lazy greedy loops.
//!
//! Submodular gains only shrink as a selection grows, so a gain computed
//! at an earlier step is an upper bound. Entries order by (gain desc,
//! id asc); the id tiebreak keeps lazy selection aligned with a naive
//! argmax scan when gains collide exactly.

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Entry {
    pub gain: f64,
    pub id: usize,
    /// Selection size when `gain` was computed.
    pub evaluated_at: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BinaryHeap;

    #[test]
    fn pops_by_gain_then_lowest_id() {
        let mut heap = BinaryHeap::new();
        heap.push(Entry { gain: 1.0, id: 7, evaluated_at: 0 });
        heap.push(Entry { gain: 2.0, id: 9, evaluated_at: 0 });
        heap.push(Entry { gain: 1.0, id: 3, evaluated_at: 0 });
        assert_eq!(heap.pop().unwrap().id, 9);
        assert_eq!(heap.pop().unwrap().id, 3);
        assert_eq!(heap.pop().unwrap().id, 7);
    }
}
