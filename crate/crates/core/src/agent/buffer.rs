use rand::Rng;

use crate::environments::Observation;
use crate::error::{Error, Result};

/// One environment step as stored for replay.
///
/// `extrinsic_reward` is `None` during reward-free pre-training. `done` marks a
/// true termination (goal reached); time-limit cut-offs are not terminal and
/// still bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub extrinsic_reward: Option<f64>,
    pub next_obs: Observation,
    pub done: bool,
    pub state_id: usize,
    pub next_state_id: usize,
}

/// Fixed-capacity FIFO ring with uniform sampling with replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T = Transition> {
    capacity: usize,
    items: Vec<T>,
    head: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends `item`, returning the evicted oldest item when full.
    pub fn push(&mut self, item: T) -> Option<T> {
        if self.items.len() < self.capacity {
            self.items.push(item);
            None
        } else {
            let old = std::mem::replace(&mut self.items[self.head], item);
            self.head = (self.head + 1) % self.capacity;
            Some(old)
        }
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// Mutable access in storage order.
    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.items.iter_mut()
    }

    /// `n` storage indices drawn uniformly with replacement; requires at least
    /// `min_size` stored items.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, min_size: usize, rng: &mut R) -> Result<Vec<usize>> {
        let required = min_size.max(1);
        if self.items.len() < required {
            return Err(Error::BufferTooSmall {
                size: self.items.len(),
                required,
            });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, min_size: usize, rng: &mut R) -> Result<Vec<&T>> {
        Ok(self
            .sample_indices(n, min_size, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    /// Item at a storage index returned by [`ReplayBuffer::sample_indices`].
    pub fn get(&self, index: usize) -> Option<&T> {
        self.items.get(index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(2).unwrap();
        assert_eq!(b.push(1), None);
        assert_eq!(b.len(), 1);
        assert_eq!(b.push(2), None);
        assert_eq!(b.push(3), Some(1));
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(b.push(4), Some(2));
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn single_item_sampled_repeatedly() {
        let mut b = ReplayBuffer::new(10).unwrap();
        b.push("only");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(b.sample(3, 1, &mut rng).unwrap(), vec![&"only"; 3]);
    }

    #[test]
    fn undersized_buffer_errors() {
        let mut b = ReplayBuffer::new(10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(b.sample(1, 1, &mut rng), Err(Error::BufferTooSmall { .. })));
        b.push(0u8);
        assert!(matches!(b.sample(1, 2, &mut rng), Err(Error::BufferTooSmall { .. })));
    }

    #[test]
    fn sampling_is_seeded() {
        let mut b = ReplayBuffer::new(100).unwrap();
        for i in 0..100 {
            b.push(i);
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            b.sample_indices(50, 1, &mut rng).unwrap()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }
}
