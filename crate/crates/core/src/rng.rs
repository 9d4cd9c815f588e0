//! Random streams consumed by policies and the environment.
//!
//! Every draw goes through [`RandomSource`], so a run can be driven either by
//! a seeded generator or by a scripted list of numbers (golden traces).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SimError};

/// Source of the two kinds of draws the simulation needs.
pub trait RandomSource {
    /// Uniform real in `[0, 1)`.
    fn uniform(&mut self) -> Result<f64>;

    /// Standard normal draw.
    fn standard_normal(&mut self) -> Result<f64>;
}

impl<R: RandomSource + ?Sized> RandomSource for &mut R {
    fn uniform(&mut self) -> Result<f64> {
        (**self).uniform()
    }

    fn standard_normal(&mut self) -> Result<f64> {
        (**self).standard_normal()
    }
}

/// Seeded ChaCha8 stream. Identical seeds give identical draws on every platform.
#[derive(Debug, Clone)]
pub struct SeededStream {
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl RandomSource for SeededStream {
    fn uniform(&mut self) -> Result<f64> {
        Ok(self.rng.random::<f64>())
    }

    fn standard_normal(&mut self) -> Result<f64> {
        Ok(self.rng.sample(StandardNormal))
    }
}

/// Replays a fixed list of numbers. Uniform and normal requests both take the
/// next value, so the list must follow the documented draw order.
#[derive(Debug, Clone)]
pub struct ScriptedStream {
    values: Vec<f64>,
    pos: usize,
}

impl ScriptedStream {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, pos: 0 }
    }

    /// Number of values consumed so far.
    pub fn consumed(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.values.len() - self.pos
    }

    fn next(&mut self) -> Result<f64> {
        match self.values.get(self.pos) {
            Some(&v) => {
                self.pos += 1;
                Ok(v)
            }
            None => Err(SimError::ScriptExhausted {
                requested: self.pos + 1,
                supplied: self.values.len(),
            }),
        }
    }
}

impl RandomSource for ScriptedStream {
    fn uniform(&mut self) -> Result<f64> {
        let u = self.next()?;
        if !(0.0..1.0).contains(&u) {
            return Err(SimError::InvalidParameter(format!(
                "scripted draw #{} = {u} used as a uniform must lie in [0, 1)",
                self.pos
            )));
        }
        Ok(u)
    }

    fn standard_normal(&mut self) -> Result<f64> {
        self.next()
    }
}

/// SplitMix64 finalizer: `x + 0x9E3779B97F4A7C15`, then the two
/// xor-shift-multiply rounds and a final xor-shift.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
