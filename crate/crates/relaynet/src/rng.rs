//! Seeded random-number streams.
//!
//! Every source of randomness draws from its own labeled ChaCha stream derived
//! from the master seed, so adding or reordering one consumer never perturbs
//! the draws seen by another.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// FNV-1a, used only to map stream labels onto ChaCha stream ids.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// An independent stream for `label` under `master`.
pub fn stream(master: u64, label: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(fnv1a(label.as_bytes()));
    rng
}

/// Standard normal draw (Box-Muller, one value per call).
pub fn normal(rng: &mut Rng) -> f64 {
    // u1 in (0, 1] so the log is finite.
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// The labeled streams one training or evaluation phase draws from.
pub struct RngBundle {
    /// Environment resets (initial-state sampling).
    pub reset: Rng,
    /// Policy action sampling during collection.
    pub action: Rng,
    /// Network weight initialization.
    pub init: Rng,
    /// Threshold calibration (state sampling + rollouts).
    pub calib: Rng,
    /// Evaluation episodes (resets; actions are deterministic).
    pub eval: Rng,
}

impl RngBundle {
    pub fn new(master: u64, phase: &str) -> Self {
        RngBundle {
            reset: stream(master, &format!("{phase}/reset")),
            action: stream(master, &format!("{phase}/action")),
            init: stream(master, &format!("{phase}/init")),
            calib: stream(master, &format!("{phase}/calib")),
            eval: stream(master, &format!("{phase}/eval")),
        }
    }
}
