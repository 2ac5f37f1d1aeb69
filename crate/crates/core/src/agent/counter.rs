/// Per-state visit counts with the bonus `β / √c(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitCounter {
    counts: Vec<u64>,
    pub beta: f64,
}

impl VisitCounter {
    pub fn new(num_states: usize, beta: f64) -> Self {
        VisitCounter {
            counts: vec![0; num_states],
            beta,
        }
    }

    pub fn count(&self, state: usize) -> u64 {
        self.counts[state]
    }

    /// Records a visit and returns the bonus at the new count.
    pub fn count_bonus(&mut self, state: usize) -> f64 {
        self.counts[state] += 1;
        self.bonus(state)
    }

    /// Bonus at the current count without recording a visit; `β` for an
    /// unvisited state.
    pub fn bonus(&self, state: usize) -> f64 {
        self.beta / (self.counts[state].max(1) as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bonus_examples() {
        let mut c = VisitCounter::new(2, 0.1);
        assert_eq!(c.count_bonus(0), 0.1);
        c.count_bonus(0);
        c.count_bonus(0);
        assert_eq!(c.count_bonus(0), 0.05);
        assert_eq!(c.count(0), 4);
        assert_eq!(c.count(1), 0);
    }

    #[test]
    fn bonus_nonincreasing() {
        let mut c = VisitCounter::new(1, 0.3);
        let seq: Vec<f64> = (0..50).map(|_| c.count_bonus(0)).collect();
        assert!(seq.windows(2).all(|w| w[1] <= w[0]));
    }
}
