use std::collections::HashMap;

use crate::error::Result;
use crate::geometry::PointSet;
use crate::representation::{Encoder, Matrix};

#[derive(Debug, Clone)]
struct Group {
    obs: Vec<f64>,
    count: usize,
    latent: Option<Vec<f64>>,
}

/// Interns the distinct next-observations held in the replay buffer.
///
/// A deterministic encoder maps equal observations to equal latents, so each
/// distinct observation is encoded once per encoder version and the buffer can
/// be viewed as a multiset of distinct latents.
#[derive(Debug, Clone, Default)]
pub(crate) struct ObservationTable {
    index: HashMap<Vec<u64>, usize>,
    groups: Vec<Option<Group>>,
    free: Vec<usize>,
}

fn key(obs: &[f64]) -> Vec<u64> {
    obs.iter().map(|v| v.to_bits()).collect()
}

impl ObservationTable {
    pub(crate) fn insert(&mut self, obs: &[f64]) -> usize {
        if let Some(&g) = self.index.get(&key(obs)) {
            self.groups[g].as_mut().expect("indexed group is live").count += 1;
            return g;
        }
        let group = Group {
            obs: obs.to_vec(),
            count: 1,
            latent: None,
        };
        let slot = match self.free.pop() {
            Some(s) => {
                self.groups[s] = Some(group);
                s
            }
            None => {
                self.groups.push(Some(group));
                self.groups.len() - 1
            }
        };
        self.index.insert(key(obs), slot);
        slot
    }

    pub(crate) fn remove(&mut self, obs: &[f64]) {
        let k = key(obs);
        let slot = *self.index.get(&k).expect("removing an observation that was never inserted");
        let group = self.groups[slot].as_mut().expect("indexed group is live");
        group.count -= 1;
        if group.count == 0 {
            self.groups[slot] = None;
            self.index.remove(&k);
            self.free.push(slot);
        }
    }

    pub(crate) fn group_of(&self, obs: &[f64]) -> Option<usize> {
        self.index.get(&key(obs)).copied()
    }

    /// Drops cached latents after the encoder changes.
    pub(crate) fn invalidate(&mut self) {
        for g in self.groups.iter_mut().flatten() {
            g.latent = None;
        }
    }

    fn fill_latents(&mut self, slots: &[usize], encoder: &Encoder) -> Result<()> {
        let mut missing: Vec<usize> = slots
            .iter()
            .copied()
            .filter(|&s| self.groups[s].as_ref().is_some_and(|g| g.latent.is_none()))
            .collect();
        missing.sort_unstable();
        missing.dedup();
        if missing.is_empty() {
            return Ok(());
        }
        let rows: Vec<&[f64]> = missing
            .iter()
            .map(|&s| self.groups[s].as_ref().expect("live").obs.as_slice())
            .collect();
        let latents = encoder.encode(&Matrix::from_rows(&rows)?)?;
        for (&s, z) in missing.iter().zip(latents.iter()) {
            self.groups[s].as_mut().expect("live").latent = Some(z.to_vec());
        }
        Ok(())
    }

    /// Latents of the given groups, in order.
    pub(crate) fn latents(&mut self, slots: &[usize], encoder: &Encoder) -> Result<PointSet> {
        self.fill_latents(slots, encoder)?;
        let mut coords = Vec::with_capacity(slots.len() * encoder.latent_dim());
        for &s in slots {
            coords.extend_from_slice(self.groups[s].as_ref().and_then(|g| g.latent.as_ref()).expect("filled"));
        }
        PointSet::new(encoder.latent_dim(), coords)
    }

    /// All live groups as `(slot → compact index, latents, multiplicities)`.
    pub(crate) fn multiset(&mut self, encoder: &Encoder) -> Result<(Vec<Option<usize>>, PointSet, Vec<usize>)> {
        let live: Vec<usize> = (0..self.groups.len()).filter(|&s| self.groups[s].is_some()).collect();
        let latents = self.latents(&live, encoder)?;
        let mut compact = vec![None; self.groups.len()];
        let mut mult = Vec::with_capacity(live.len());
        for (i, &s) in live.iter().enumerate() {
            compact[s] = Some(i);
            mult.push(self.groups[s].as_ref().expect("live").count);
        }
        Ok((compact, latents, mult))
    }

    #[cfg(test)]
    pub(crate) fn distinct(&self) -> usize {
        self.index.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interning_tracks_multiplicity() {
        let mut t = ObservationTable::default();
        let a = t.insert(&[0.0, 1.0]);
        let b = t.insert(&[1.0, 0.0]);
        assert_eq!(t.insert(&[0.0, 1.0]), a);
        assert_ne!(a, b);
        assert_eq!(t.distinct(), 2);
        t.remove(&[0.0, 1.0]);
        assert_eq!(t.group_of(&[0.0, 1.0]), Some(a));
        t.remove(&[0.0, 1.0]);
        assert_eq!(t.group_of(&[0.0, 1.0]), None);
        assert_eq!(t.insert(&[5.0, 5.0]), a);
        let enc = Encoder::Identity { dim: 2 };
        let (compact, pts, mult) = t.multiset(&enc).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(mult, vec![1, 1]);
        assert_eq!(pts.point(compact[a].unwrap()), &[5.0, 5.0]);
    }
}
