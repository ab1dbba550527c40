use std::collections::VecDeque;

/// Strict-majority value of the last `window` samples.
///
/// `None` when fewer than `window` samples are available or when no value
/// occurs in more than half of them.
pub fn debounced_count(samples: &[u32], window: usize) -> Option<u32> {
    if window == 0 || samples.len() < window {
        return None;
    }
    let tail = &samples[samples.len() - window..];

    // Boyer-Moore vote, then confirm the candidate.
    let mut candidate = tail[0];
    let mut weight = 0usize;
    for &v in tail {
        if weight == 0 {
            candidate = v;
            weight = 1;
        } else if v == candidate {
            weight += 1;
        } else {
            weight -= 1;
        }
    }
    let occurrences = tail.iter().filter(|&&v| v == candidate).count();
    (2 * occurrences > window).then_some(candidate)
}

/// Fixed-capacity ring of the most recent raw per-frame counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawWindow {
    capacity: usize,
    samples: VecDeque<u32>,
}

impl RawWindow {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, samples: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, count: u32) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(count);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }

    pub fn samples(&self) -> Vec<u32> {
        self.samples.iter().copied().collect()
    }

    pub fn debounced(&mut self) -> Option<u32> {
        debounced_count(self.samples.make_contiguous(), self.capacity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Counts every distinct value; independent of the voting shortcut above.
    fn majority_oracle(samples: &[u32], window: usize) -> Option<u32> {
        if samples.len() < window {
            return None;
        }
        let tail = &samples[samples.len() - window..];
        let mut best = None;
        for &v in tail {
            let n = tail.iter().filter(|&&x| x == v).count();
            if n * 2 > window {
                best = Some(v);
            }
        }
        best
    }

    #[test]
    fn constant_window() {
        assert_eq!(debounced_count(&[3, 3, 3, 3, 3], 5), Some(3));
    }

    #[test]
    fn single_flicker_is_outvoted() {
        assert_eq!(majority_oracle(&[3, 4, 3, 3, 3], 5), Some(3));
        assert_eq!(debounced_count(&[3, 4, 3, 3, 3], 5), Some(3));
    }

    #[test]
    fn underfilled_window_is_indeterminate() {
        assert_eq!(debounced_count(&[3, 4], 5), None);
        assert_eq!(debounced_count(&[], 1), None);
    }

    #[test]
    fn no_strict_majority_is_indeterminate() {
        assert_eq!(majority_oracle(&[1, 2, 1, 2, 3], 5), None);
        assert_eq!(debounced_count(&[1, 2, 1, 2, 3], 5), None);
        // exactly half is not a strict majority
        assert_eq!(debounced_count(&[1, 1, 2, 2], 4), None);
    }

    #[test]
    fn only_the_last_window_counts() {
        assert_eq!(debounced_count(&[9, 9, 9, 1, 1, 2, 2], 5), None);
        assert_eq!(debounced_count(&[9, 9, 9, 1, 1, 1, 2], 5), Some(1));
    }

    #[test]
    fn ring_keeps_last_samples() {
        let mut w = RawWindow::new(3);
        for v in [1, 2, 3, 4] {
            w.push(v);
        }
        assert_eq!(w.samples(), vec![2, 3, 4]);
        assert_eq!(w.debounced(), None);
        w.push(4);
        assert_eq!(w.debounced(), Some(4));
    }

    proptest! {
        #[test]
        fn matches_counting_oracle(samples in prop::collection::vec(0u32..4, 0..12), window in 1usize..8) {
            prop_assert_eq!(debounced_count(&samples, window), majority_oracle(&samples, window));
        }

        #[test]
        fn constant_window_yields_constant(v in 0u32..50, window in 1usize..10, extra in 0usize..5) {
            let samples = vec![v; window + extra];
            prop_assert_eq!(debounced_count(&samples, window), Some(v));
        }
    }
}
