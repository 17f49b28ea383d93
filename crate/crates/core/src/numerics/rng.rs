use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

/// Position in a counter-based random stream.
///
/// The output is a pure function of `(seed, stream_id, counter)`; `counter`
/// counts 64-bit draws from the start of the stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
    pub counter: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id, counter: 0 }
    }

    fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(u128::from(self.counter) * 2);
        rng
    }

    /// The stream advanced past `draws` 64-bit outputs.
    pub fn advanced(&self, draws: u64) -> Self {
        RngStream { counter: self.counter + draws, ..*self }
    }
}

fn unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `count` points in `[0, 1)^dim`, row by row from the stream position.
pub fn uniform_draws(stream: RngStream, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = stream.generator();
    (0..count)
        .map(|_| (0..dim).map(|_| unit(rng.next_u64())).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible() {
        let s = RngStream::new(7, 3);
        assert_eq!(uniform_draws(s, 100, 3), uniform_draws(s, 100, 3));
        assert_ne!(uniform_draws(s, 10, 1), uniform_draws(RngStream::new(7, 4), 10, 1));
    }

    #[test]
    fn counter_offsets_match_sequence() {
        let s = RngStream::new(11, 0);
        let full = uniform_draws(s, 20, 1);
        let tail = uniform_draws(s.advanced(5), 15, 1);
        assert_eq!(&full[5..], &tail[..]);
    }

    #[test]
    fn mean_near_half() {
        let draws = uniform_draws(RngStream::new(1, 0), 100_000, 1);
        let mean: f64 = draws.iter().map(|v| v[0]).sum::<f64>() / 1e5;
        assert!((mean - 0.5).abs() < 0.01);
    }

    #[test]
    fn coordinates_uncorrelated() {
        let n = 100_000.0;
        let draws = uniform_draws(RngStream::new(2, 9), 100_000, 2);
        let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for v in &draws {
            sx += v[0];
            sy += v[1];
            sxy += v[0] * v[1];
            sxx += v[0] * v[0];
            syy += v[1] * v[1];
        }
        let cov = sxy / n - sx * sy / n / n;
        let corr = cov / ((sxx / n - (sx / n).powi(2)) * (syy / n - (sy / n).powi(2))).sqrt();
        assert!(corr.abs() < 0.02, "corr {corr}");
    }
}
