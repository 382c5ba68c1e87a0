use alloc::format;
use alloc::vec::Vec;

use rand_core::RngCore;

use super::uniform;
use crate::error::SimError;
use crate::num::CompensatedSum;

/// Sample mean and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Mean and standard error of `values`, summed in index order.
pub fn estimate(values: &[f64]) -> Result<Estimate, SimError> {
    let m = values.len();
    if m < 2 {
        return Err(SimError::Invalid(format!("need at least 2 samples, got {m}")));
    }
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(SimError::Invalid(format!("sample {i} is not finite ({v})")));
    }
    let mut s = CompensatedSum::new();
    s.extend(values.iter().copied());
    let mean = s.value() / m as f64;
    let mut ss = CompensatedSum::new();
    ss.extend(values.iter().map(|v| (v - mean) * (v - mean)));
    let var = ss.value() / (m - 1) as f64;
    Ok(Estimate { mean, stderr: libm::sqrt(var / m as f64), samples: m })
}

/// Draws indices with probability proportional to nonnegative weights.
#[derive(Clone, Debug)]
pub struct DiscreteSampler {
    cumulative: Vec<f64>,
}

impl DiscreteSampler {
    pub fn new(weights: &[f64]) -> Result<Self, SimError> {
        let mut acc = CompensatedSum::new();
        let mut cumulative = Vec::with_capacity(weights.len());
        for (i, w) in weights.iter().enumerate() {
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(SimError::Invalid(format!("weight {i} is {w}")));
            }
            acc.add(*w);
            cumulative.push(acc.value());
        }
        if !(acc.value() > 0.0) {
            return Err(SimError::Invalid("weights sum to zero".into()));
        }
        Ok(Self { cumulative })
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("nonempty");
        let u = uniform(rng) * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        i.min(self.cumulative.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::path_rng;

    #[test]
    fn constant_functional() {
        let e = estimate(&[1.0; 10]).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.stderr, 0.0);
        assert!(estimate(&[1.0]).is_err());
        assert!(estimate(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn sampler_skips_zero_weights() {
        let s = DiscreteSampler::new(&[0.0, 1.0, 0.0, 3.0]).unwrap();
        let mut rng = path_rng(1, 0);
        let mut counts = [0usize; 4];
        for _ in 0..20_000 {
            counts[s.sample(&mut rng)] += 1;
        }
        assert_eq!(counts[0] + counts[2], 0);
        let f = counts[3] as f64 / 20_000.0;
        assert!((f - 0.75).abs() < 0.02);
    }
}
