//! Synthetic human gesture sequences.
//!
//! Every sequence is a 100-step by 95-feature pose matrix. A fixed random
//! "anatomy" mixes a 3-dimensional latent (envelope, envelope·cos β,
//! envelope·sin β) through per-feature tanh units, so the pointing direction
//! is present in the features but never declared.

pub mod dataset;
pub mod probe;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GESTURE_STEPS: usize = 100;
pub const GESTURE_FEATURES: usize = 95;
pub const GESTURE_LEN: usize = GESTURE_STEPS * GESTURE_FEATURES;
pub const NUM_INTERVENTION_TEMPLATES: usize = 10;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;
/// Upper bound on the style perturbation amplitude.
pub const STYLE_AMPLITUDE: f64 = 0.1;
/// Hold phase of the referencing envelope, `[start, end)`.
pub const HOLD_PHASE: (usize, usize) = (30, 70);

const VALUE_BOUND: f64 = 1.5;

/// Row-major `[step][feature]` pose matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureSequence {
    values: Vec<f64>,
}

impl GestureSequence {
    pub fn zeros() -> Self {
        Self {
            values: vec![0.0; GESTURE_LEN],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() != GESTURE_LEN {
            return Err(Error::ShapeMismatch(format!(
                "gesture has {} values, expected {GESTURE_LEN}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("gesture values must be finite".into()));
        }
        Ok(Self { values })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, step: usize, feature: usize) -> f64 {
        self.values[step * GESTURE_FEATURES + feature]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn l2_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// All-zero sequence marking "no gesture".
pub fn zero_gesture() -> GestureSequence {
    GestureSequence::zeros()
}

/// Fixed mixing from the latent gesture to 95 observed features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureAnatomy {
    pub anatomy_seed: u64,
    pub weights: Vec<[f64; 3]>,
    pub biases: Vec<f64>,
}

impl GestureAnatomy {
    pub fn from_seed(anatomy_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(anatomy_seed ^ 0x616e_6174_6f6d_7900);
        let normal = Normal::new(0.0, 0.8).expect("valid sigma");
        let mut weights = Vec::with_capacity(GESTURE_FEATURES);
        let mut biases = Vec::with_capacity(GESTURE_FEATURES);
        for _ in 0..GESTURE_FEATURES {
            weights.push([
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            ]);
            biases.push(rng.random_range(-0.3..0.3));
        }
        Self {
            anatomy_seed,
            weights,
            biases,
        }
    }
}

/// Per-episode smooth style perturbation, `|s_j(t)| <= STYLE_AMPLITUDE`.
struct Style {
    amp: Vec<f64>,
    phase: Vec<f64>,
    freq: f64,
}

impl Style {
    fn from_seed(style_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(style_seed ^ 0x7374_796c_6500_0000);
        let freq = rng.random_range(0.5..1.5);
        let amp = (0..GESTURE_FEATURES)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let phase = (0..GESTURE_FEATURES)
            .map(|_| rng.random_range(0.0..2.0 * PI))
            .collect();
        Self { amp, phase, freq }
    }

    fn at(&self, feature: usize, step: usize) -> f64 {
        let t = step as f64 / GESTURE_STEPS as f64;
        STYLE_AMPLITUDE * self.amp[feature] * (2.0 * PI * self.freq * t + self.phase[feature]).sin()
    }
}

/// Rise (steps 0-29), hold (30-69), fall (70-99) envelope in `[0, 1]`.
pub fn referencing_envelope(step: usize) -> f64 {
    let (hold_start, hold_end) = HOLD_PHASE;
    if step < hold_start {
        0.5 * (1.0 - (PI * (step + 1) as f64 / hold_start as f64).cos())
    } else if step < hold_end {
        1.0
    } else {
        let span = (GESTURE_STEPS - hold_end) as f64;
        0.5 * (1.0 + (PI * (step + 1 - hold_end) as f64 / span).cos())
    }
}

/// Oscillating "wave-off" envelope used by intervention gestures.
pub fn intervention_envelope(step: usize) -> f64 {
    (2.0 * PI * 3.0 * step as f64 / GESTURE_STEPS as f64).sin().abs()
}

fn synthesize(
    anatomy: &GestureAnatomy,
    style: &Style,
    latent: impl Fn(usize) -> [f64; 3],
    mut noise: impl FnMut() -> f64,
) -> GestureSequence {
    let mut values = Vec::with_capacity(GESTURE_LEN);
    for t in 0..GESTURE_STEPS {
        let z = latent(t);
        for j in 0..GESTURE_FEATURES {
            let w = &anatomy.weights[j];
            let pre = w[0] * z[0] + w[1] * z[1] + w[2] * z[2] + anatomy.biases[j] + style.at(j, t);
            values.push((pre.tanh() + noise()).clamp(-VALUE_BOUND, VALUE_BOUND));
        }
    }
    GestureSequence { values }
}

/// Pointing gesture toward `bearing` (radians, relative to the gesturer's
/// heading, counterclockwise positive). Noise is a normal with standard
/// deviation `noise_sigma`, truncated at five sigma.
pub fn referencing_gesture(
    bearing: f64,
    anatomy: &GestureAnatomy,
    style_seed: u64,
    noise_sigma: f64,
) -> Result<GestureSequence> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidParams(format!("noise_sigma {noise_sigma} must be >= 0")));
    }
    let style = Style::from_seed(style_seed);
    let (c, s) = (bearing.cos(), bearing.sin());
    let mut rng = ChaCha8Rng::seed_from_u64(style_seed ^ 0x6e6f_6973_6500_0000);
    let normal = Normal::new(0.0, noise_sigma).expect("sigma checked above");
    let bound = 5.0 * noise_sigma;
    Ok(synthesize(
        anatomy,
        &style,
        |t| {
            let a = referencing_envelope(t);
            [a, a * c, a * s]
        },
        || {
            if noise_sigma == 0.0 {
                0.0
            } else {
                normal.sample(&mut rng).clamp(-bound, bound)
            }
        },
    ))
}

/// One of the ten recorded-style intervention templates.
pub fn intervention_gesture(index: usize, anatomy: &GestureAnatomy) -> Result<GestureSequence> {
    if index >= NUM_INTERVENTION_TEMPLATES {
        return Err(Error::IndexOutOfRange {
            index,
            limit: NUM_INTERVENTION_TEMPLATES,
        });
    }
    let style = Style::from_seed(
        anatomy
            .anatomy_seed
            .wrapping_mul(31)
            .wrapping_add(0x1000 + index as u64),
    );
    Ok(synthesize(
        anatomy,
        &style,
        |t| [intervention_envelope(t), 0.0, 0.0],
        || 0.0,
    ))
}
