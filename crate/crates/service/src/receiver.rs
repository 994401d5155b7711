use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

/// The pre-programmed receiver: literal-listener choice (see the session
/// module) after an exponentially distributed think time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverBehavior {
    pub mean_delay: f64,
}

impl ReceiverBehavior {
    /// `mean_delay` must be positive and finite.
    pub fn new(mean_delay: f64) -> Option<Self> {
        (mean_delay > 0.0 && mean_delay.is_finite()).then_some(Self { mean_delay })
    }

    pub fn sample_delay<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Exp::new(1.0 / self.mean_delay).expect("positive rate").sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sample_mean_tracks_configured_mean() {
        let r = ReceiverBehavior::new(1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10_000;
        let mean = (0..n).map(|_| r.sample_delay(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.5).abs() <= 0.05 * 1.5, "{mean}");
        assert!(ReceiverBehavior::new(0.0).is_none());
    }
}
