//! Variational dropout: one mask per sequence, reused at every time step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drop probabilities for the cell input, the recurrent state and the
/// emitted hidden state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutRates {
    pub input: f64,
    pub state: f64,
    pub output: f64,
}

impl DropoutRates {
    pub const NONE: DropoutRates = DropoutRates { input: 0.0, state: 0.0, output: 0.0 };

    pub fn validate(&self) -> Result<()> {
        for r in [self.input, self.state, self.output] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::RateOutOfRange(r));
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.input == 0.0 && self.state == 0.0 && self.output == 0.0
    }
}

impl Default for DropoutRates {
    fn default() -> Self {
        Self::NONE
    }
}

/// Input width and hidden width of one masked cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskShape {
    pub input: usize,
    pub hidden: usize,
}

/// Inverted-dropout multipliers for one LSTM cell: each entry is either 0
/// or `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMasks {
    pub input: Vec<f64>,
    pub state: Vec<f64>,
    pub output: Vec<f64>,
}

impl CellMasks {
    pub fn ones(shape: MaskShape) -> Self {
        Self { input: vec![1.0; shape.input], state: vec![1.0; shape.hidden], output: vec![1.0; shape.hidden] }
    }
}

/// Masks for every dropout-enabled cell of one sequence, in the order of the
/// shapes they were sampled for.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub cells: Vec<CellMasks>,
}

fn draw<R: Rng>(rng: &mut R, n: usize, rate: f64) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect()
}

pub fn sample_variational_masks(shapes: &[MaskShape], rates: DropoutRates, seed: u64) -> Result<DropoutMask> {
    rates.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells = shapes
        .iter()
        .map(|s| CellMasks {
            input: draw(&mut rng, s.input, rates.input),
            state: draw(&mut rng, s.hidden, rates.state),
            output: draw(&mut rng, s.hidden, rates.output),
        })
        .collect();
    Ok(DropoutMask { cells })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAPES: [MaskShape; 2] = [MaskShape { input: 5, hidden: 8 }, MaskShape { input: 3, hidden: 8 }];

    #[test]
    fn zero_rate_is_all_ones() {
        let m = sample_variational_masks(&SHAPES, DropoutRates::NONE, 7).unwrap();
        for c in &m.cells {
            assert!(c.input.iter().chain(&c.state).chain(&c.output).all(|&v| v == 1.0));
        }
    }

    #[test]
    fn same_seed_same_masks() {
        let r = DropoutRates { input: 0.25, state: 0.1, output: 0.25 };
        assert_eq!(sample_variational_masks(&SHAPES, r, 3).unwrap(), sample_variational_masks(&SHAPES, r, 3).unwrap());
        assert_ne!(sample_variational_masks(&SHAPES, r, 3).unwrap(), sample_variational_masks(&SHAPES, r, 4).unwrap());
    }

    #[test]
    fn keep_fraction_and_scaling() {
        let r = DropoutRates { input: 0.25, state: 0.25, output: 0.25 };
        let m = sample_variational_masks(&[MaskShape { input: 100_000, hidden: 1 }], r, 11).unwrap();
        let kept = m.cells[0].input.iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
        assert!((kept - 0.75).abs() < 0.01, "{kept}");
        assert!(m.cells[0].input.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_rates() {
        for bad in [1.0, -0.1, f64::NAN] {
            let r = DropoutRates { input: 0.0, state: bad, output: 0.0 };
            assert!(matches!(sample_variational_masks(&SHAPES, r, 0), Err(Error::RateOutOfRange(_))));
        }
    }
}
