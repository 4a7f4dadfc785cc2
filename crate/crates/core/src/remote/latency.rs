use rand::Rng;
use serde::{Deserialize, Serialize};

/// One-way link delay: a fixed part plus optional uniform jitter, in ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub one_way_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
}

impl LatencyModel {
    pub fn fixed(one_way_ms: f64) -> Self {
        Self::with_jitter(one_way_ms, 0.0)
    }

    pub fn with_jitter(one_way_ms: f64, jitter_ms: f64) -> Self {
        assert!(one_way_ms >= 0.0 && jitter_ms >= 0.0, "delays must be non-negative");
        Self { one_way_ms, jitter_ms }
    }

    /// Symmetric link with the given round-trip time.
    pub fn from_rtt(rtt_ms: f64) -> Self {
        Self::fixed(rtt_ms / 2.0)
    }

    pub fn rtt_ms(&self) -> f64 {
        2.0 * self.one_way_ms
    }

    /// One sampled one-way delay in microseconds.
    pub fn sample_us<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let j = if self.jitter_ms > 0.0 {
            rng.gen_range(0.0..self.jitter_ms)
        } else {
            0.0
        };
        ((self.one_way_ms + j) * 1000.0).round() as u64
    }

    pub fn one_way_us(&self) -> u64 {
        (self.one_way_ms * 1000.0).round() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn jitter_stays_in_bounds() {
        let m = LatencyModel::with_jitter(10.0, 2.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let d = m.sample_us(&mut rng);
            assert!((10_000..=12_000).contains(&d));
        }
        assert_eq!(LatencyModel::from_rtt(40.0).one_way_us(), 20_000);
    }
}
