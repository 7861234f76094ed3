use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetManifest, Hatefulness, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, valid, test };
        let parts = r.as_array();
        if parts.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::invalid(format!(
                "split ratios must be positive, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "split ratios must sum to 1 within 1e-9, got {sum}"
            )));
        }
        Ok(r)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }

    /// Largest-remainder apportionment of `n` items. Ties on the remainder go
    /// to the earlier split (train, then valid, then test).
    pub fn apportion(&self, n: usize) -> [usize; 3] {
        let quotas = self.as_array().map(|r| r * n as f64);
        let mut sizes = quotas.map(|q| (q + 1e-9).floor() as usize);
        let assigned: usize = sizes.iter().sum();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - sizes[a] as f64;
            let rb = quotas[b] - sizes[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &k in order.iter().take(n.saturating_sub(assigned)) {
            sizes[k] += 1;
        }
        sizes
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

/// Assigns every sample to train/valid/test, stratified by the task 1 label.
///
/// Within each stratum the samples are shuffled with a ChaCha8 stream seeded by
/// `seed`, then cut into consecutive runs whose sizes come from
/// [`SplitRatios::apportion`].
pub fn split_dataset(
    manifest: &DatasetManifest,
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetManifest> {
    let ratios = SplitRatios::new(ratios.train, ratios.valid, ratios.test)?;
    if let Some(s) = manifest.samples().iter().find(|s| s.split != Split::Unassigned) {
        return Err(Error::invalid(format!(
            "sample {:?} already assigned to {}",
            s.id, s.split
        )));
    }

    let mut out = manifest.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for label in Hatefulness::ALL {
        let mut members: Vec<usize> = manifest
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.labels.task1() == label)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            return Err(Error::invalid(format!(
                "stratum {} has {} samples; at least 3 are required",
                label.code(),
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let sizes = ratios.apportion(members.len());
        let mut cursor = 0;
        for (split, size) in Split::ASSIGNED.into_iter().zip(sizes) {
            for &i in &members[cursor..cursor + size] {
                out.samples_mut()[i].split = split;
            }
            cursor += size;
        }
    }
    Ok(out)
}
