use std::collections::VecDeque;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Default number of latent vectors retained.
pub const PRIOR_CAPACITY: usize = 4096;

/// FIFO of latent codes produced by earlier generator passes, used as
/// samples of the prior the discriminator treats as real.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorBuffer {
    capacity: usize,
    dim: usize,
    items: VecDeque<Vec<f64>>,
}

impl PriorBuffer {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::Config("prior buffer needs capacity >= 1 and dim >= 1".into()));
        }
        Ok(Self { capacity, dim, items: VecDeque::with_capacity(capacity.min(1 << 16)) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Appends `z`, evicting the oldest entry when full.
    pub fn push(&mut self, z: Vec<f64>) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::Shape(format!("prior vector has length {}, expected {}", z.len(), self.dim)));
        }
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(z);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.items.iter()
    }
}

/// `count` uniform draws with replacement; standard-normal vectors while the
/// buffer is still empty.
pub fn sample_prior(buffer: &PriorBuffer, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            if buffer.is_empty() {
                (0..buffer.dim).map(|_| rng.sample(StandardNormal)).collect()
            } else {
                buffer.items[rng.random_range(0..buffer.items.len())].clone()
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bootstrap_single_and_seeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let empty = PriorBuffer::new(4, 3).unwrap();
        let draws = sample_prior(&empty, 5, &mut rng);
        assert_eq!(draws.len(), 5);
        assert!(draws.iter().all(|d| d.len() == 3));
        assert_ne!(draws[0], draws[1]);

        let mut one = PriorBuffer::new(4, 2).unwrap();
        one.push(vec![0.5, -1.0]).unwrap();
        assert!(sample_prior(&one, 10, &mut rng).iter().all(|d| d == &vec![0.5, -1.0]));

        let a = sample_prior(&empty, 3, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_prior(&empty, 3, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn fifo_eviction_and_shape_check() {
        let mut buf = PriorBuffer::new(2, 1).unwrap();
        for k in 0..3 {
            buf.push(vec![k as f64]).unwrap();
        }
        let kept: Vec<f64> = buf.iter().map(|v| v[0]).collect();
        assert_eq!(kept, vec![1.0, 2.0]);
        assert!(buf.push(vec![0.0, 1.0]).is_err());
    }
}
