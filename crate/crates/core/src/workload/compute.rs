use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::clock::now_ns;
use crate::model::ComputeModel;

/// Spin on the CPU for at least `duration_ns`. Returns the elapsed time.
pub fn busy_compute(duration_ns: u64) -> u64 {
    let start = now_ns();
    if duration_ns == 0 {
        return 0;
    }
    let mut x = 0u64;
    loop {
        // keep the core busy between clock reads
        for i in 0..64u64 {
            x = std::hint::black_box(x.wrapping_mul(6364136223846793005).wrapping_add(i));
        }
        let now = now_ns();
        if now - start >= duration_ns {
            return now - start;
        }
    }
}

/// Draw one busy-work duration in ns.
pub fn sample_duration(model: &ComputeModel, rng: &mut ChaCha8Rng) -> u64 {
    match *model {
        ComputeModel::Fixed(d) => d,
        ComputeModel::Uniform { lo, hi } => {
            if lo >= hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        }
        ComputeModel::LogNormal { mu, sigma } => {
            let ms = match LogNormal::new(mu, sigma) {
                Ok(d) => d.sample(rng),
                Err(_) => mu.exp(),
            };
            (ms * 1e6).round().max(0.0) as u64
        }
    }
}
