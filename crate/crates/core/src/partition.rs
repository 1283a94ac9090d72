//! Cluster-membership bookkeeping and categorical sampling shared by all
//! samplers.
//!
//! A [`Membership`] keeps labels dense: clusters are numbered contiguously
//! from 0, new clusters are always appended at index `K`, and a cluster that
//! empties is deleted immediately with all higher labels shifted down.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// Sentinel label for an item that is mid-move (removed, not yet reassigned).
pub const UNASSIGNED: usize = usize::MAX;

/// Row or column partition: per-item labels plus per-cluster sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Membership {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

/// What [`Membership::remove`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Removal {
    /// Cluster the item was removed from (index before any compaction).
    pub cluster: usize,
    /// True if that cluster became empty and was deleted.
    pub emptied: bool,
}

impl Membership {
    /// Everyone in one cluster (the initial partition of every sampler).
    pub fn single_cluster(len: usize) -> Self {
        Membership {
            labels: vec![0; len],
            sizes: vec![len],
        }
    }

    /// Build from a dense label vector; labels must be contiguous from 0.
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let k = match labels.iter().max() {
            None => return Err(Error::InvalidParameter("empty membership".into())),
            Some(&m) => m + 1,
        };
        let mut sizes = vec![0usize; k];
        for &l in labels {
            if l >= k {
                return Err(Error::InvalidParameter(format!("label {l} out of range")));
            }
            sizes[l] += 1;
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter("non-contiguous labels".into()));
        }
        Ok(Membership {
            labels: labels.to_vec(),
            sizes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    /// Detach an item from its cluster. If the cluster empties it is deleted
    /// and every label above it shifts down by one.
    pub fn remove(&mut self, index: usize) -> Removal {
        let cluster = self.labels[index];
        assert!(cluster != UNASSIGNED, "item {index} already removed");
        self.labels[index] = UNASSIGNED;
        self.sizes[cluster] -= 1;
        if self.sizes[cluster] == 0 {
            self.sizes.remove(cluster);
            for label in self.labels.iter_mut() {
                if *label != UNASSIGNED && *label > cluster {
                    *label -= 1;
                }
            }
            Removal {
                cluster,
                emptied: true,
            }
        } else {
            Removal {
                cluster,
                emptied: false,
            }
        }
    }

    /// Attach an item to `cluster`; `cluster == num_clusters()` opens a new one.
    pub fn assign(&mut self, index: usize, cluster: usize) {
        assert!(self.labels[index] == UNASSIGNED, "item {index} still assigned");
        assert!(cluster <= self.sizes.len(), "cluster {cluster} out of range");
        if cluster == self.sizes.len() {
            self.sizes.push(0);
        }
        self.sizes[cluster] += 1;
        self.labels[index] = cluster;
    }

    /// Check label contiguity, absence of empty clusters, and size totals.
    /// Items mid-move (unassigned) are excluded from the totals.
    pub fn validate(&self) -> Result<()> {
        let k = self.sizes.len();
        let mut counted = vec![0usize; k];
        for &l in &self.labels {
            if l == UNASSIGNED {
                continue;
            }
            if l >= k {
                return Err(Error::InvalidParameter(format!("label {l} >= K={k}")));
            }
            counted[l] += 1;
        }
        if counted != self.sizes {
            return Err(Error::InvalidParameter("sizes out of sync with labels".into()));
        }
        if self.sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter("empty cluster survived".into()));
        }
        Ok(())
    }
}

/// Sampler configuration: concentrations, iteration budget, seeding and the
/// worker count of the distributed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Row concentration (alpha > 0).
    pub alpha: f64,
    /// Column concentration (beta > 0).
    pub beta: f64,
    /// Outer iterations (0 echoes the initial single-cluster partition).
    pub iterations: usize,
    pub seed: u64,
    /// Number of workers for the distributed sampler.
    pub workers: usize,
    /// Join worker summaries in worker-id order and zero recorded wall times
    /// so identical runs produce identical bytes.
    pub deterministic: bool,
}

impl InferenceConfig {
    pub fn new(alpha: f64, beta: f64, iterations: usize, seed: u64, workers: usize) -> Result<Self> {
        let config = InferenceConfig {
            alpha,
            beta,
            iterations,
            seed,
            workers,
            deterministic: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Master RNG stream id; worker `e` uses stream `e + 1`.
pub const MASTER_STREAM: u64 = 0;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-(seed, stream, iteration) generator so parallel workers
/// draw reproducibly regardless of scheduling.
pub fn derive_rng(seed: u64, stream: u64, iteration: u64) -> ChaCha12Rng {
    let mut state = splitmix(seed);
    state = splitmix(state ^ splitmix(stream.wrapping_add(0x517C_C1B7_2722_0A95)));
    state = splitmix(state ^ splitmix(iteration.wrapping_add(0x6A09_E667_F3BC_C909)));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}

/// Draw an index with probability `exp(lw_i - logsumexp(lw))`, subtracting the
/// max before exponentiating. Errors when no weight is finite.
pub fn sample_categorical_log<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    let mut max = f64::NEG_INFINITY;
    for &lw in log_weights {
        if lw.is_nan() {
            return Err(Error::DegenerateWeights);
        }
        if lw > max {
            max = lw;
        }
    }
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let mut total = 0.0;
    for &lw in log_weights {
        total += (lw - max).exp();
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &lw) in log_weights.iter().enumerate() {
        let w = (lw - max).exp();
        if w > 0.0 {
            last_positive = i;
        }
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    // u == total can occur at the fp boundary; land on the last viable index.
    Ok(last_positive)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remove_deletes_singleton_cluster() {
        let mut m = Membership::from_labels(&[0, 0, 1]).unwrap();
        let r = m.remove(2);
        assert_eq!(r, Removal { cluster: 1, emptied: true });
        assert_eq!(m.labels(), &[0, 0, UNASSIGNED]);
        assert_eq!(m.sizes(), &[2]);
        assert_eq!(m.num_clusters(), 1);
        m.validate().unwrap();
    }

    #[test]
    fn remove_keeps_nonempty_cluster() {
        let mut m = Membership::from_labels(&[0, 1, 0]).unwrap();
        let r = m.remove(0);
        assert_eq!(r, Removal { cluster: 0, emptied: false });
        assert_eq!(m.sizes(), &[1, 1]);
        assert_eq!(m.num_clusters(), 2);
        m.validate().unwrap();
    }

    #[test]
    fn remove_then_reassign_restores() {
        let original = Membership::from_labels(&[0, 1, 0, 2, 1]).unwrap();
        for i in 0..original.len() {
            let mut m = original.clone();
            let r = m.remove(i);
            assert!(!r.emptied);
            m.assign(i, r.cluster);
            assert_eq!(m, original);
        }
    }

    #[test]
    fn relabel_shifts_down() {
        let mut m = Membership::from_labels(&[0, 1, 2, 1]).unwrap();
        m.remove(0);
        assert_eq!(m.labels(), &[UNASSIGNED, 0, 1, 0]);
        m.assign(0, 2);
        assert_eq!(m.sizes(), &[2, 1, 1]);
        m.validate().unwrap();
    }

    #[test]
    fn singleton_weight_always_drawn() {
        let mut rng = derive_rng(1, 2, 3);
        for _ in 0..100 {
            assert_eq!(sample_categorical_log(&[0.0], &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn three_to_one_odds() {
        let mut rng = derive_rng(42, 0, 0);
        let lw = [1.0f64.ln(), 3.0f64.ln()];
        let n = 100_000;
        let mut hits = 0usize;
        for _ in 0..n {
            if sample_categorical_log(&lw, &mut rng).unwrap() == 1 {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.01, "freq = {freq}");
    }

    #[test]
    fn equal_weights_are_uniform() {
        let mut rng = derive_rng(7, 7, 7);
        let lw = [-4.2, -4.2, -4.2];
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_categorical_log(&lw, &mut rng).unwrap()] += 1;
        }
        let sigma = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for &c in &counts {
            assert!((c as f64 - n as f64 / 3.0).abs() < 3.0 * sigma, "counts {counts:?}");
        }
    }

    #[test]
    fn degenerate_weights_error() {
        let mut rng = derive_rng(0, 0, 0);
        assert!(sample_categorical_log(&[f64::NEG_INFINITY; 3], &mut rng).is_err());
        assert!(sample_categorical_log(&[0.0, f64::NAN], &mut rng).is_err());
    }

    #[test]
    fn shift_invariance() {
        for case in 0..200u64 {
            let mut rng_weights = derive_rng(900, case, 0);
            let k = rng_weights.random_range(1..6usize);
            let lw: Vec<f64> = (0..k).map(|_| rng_weights.random_range(-5.0..5.0)).collect();
            let shifted: Vec<f64> = lw.iter().map(|x| x + 37.5).collect();
            let mut rng_a = derive_rng(17, case, 1);
            let mut rng_b = derive_rng(17, case, 1);
            assert_eq!(
                sample_categorical_log(&lw, &mut rng_a).unwrap(),
                sample_categorical_log(&shifted, &mut rng_b).unwrap()
            );
        }
    }

    #[test]
    fn derive_rng_streams_differ() {
        let mut a = derive_rng(1, 1, 1);
        let mut b = derive_rng(1, 2, 1);
        let mut c = derive_rng(1, 1, 2);
        let xs: Vec<u64> = (0..4).map(|_| a.random()).collect();
        let ys: Vec<u64> = (0..4).map(|_| b.random()).collect();
        let zs: Vec<u64> = (0..4).map(|_| c.random()).collect();
        assert_ne!(xs, ys);
        assert_ne!(xs, zs);
        let mut a2 = derive_rng(1, 1, 1);
        let xs2: Vec<u64> = (0..4).map(|_| a2.random()).collect();
        assert_eq!(xs, xs2);
    }

    #[test]
    fn config_validation() {
        assert!(InferenceConfig::new(1.0, 1.0, 100, 0, 4).is_ok());
        assert!(InferenceConfig::new(0.0, 1.0, 100, 0, 4).is_err());
        assert!(InferenceConfig::new(1.0, -2.0, 100, 0, 4).is_err());
        assert!(InferenceConfig::new(1.0, 1.0, 100, 0, 0).is_err());
        assert!(InferenceConfig::new(1.0, 1.0, 0, 0, 1).is_ok());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn invariants_hold_after_random_ops(ops in prop::collection::vec((0..20usize, 0..6usize), 1..200)) {
                let mut m = Membership::single_cluster(20);
                for (index, target) in ops {
                    let _ = m.remove(index);
                    let k = m.num_clusters();
                    m.assign(index, target.min(k));
                    m.validate().unwrap();
                }
            }
        }
    }
}
