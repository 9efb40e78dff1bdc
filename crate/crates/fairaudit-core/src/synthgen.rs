//! Synthetic benchmark generator.
//!
//! Five standard-normal features, a protected indicator drawn from the
//! logistic of their sum (so group membership is confounded with every
//! feature), and an outcome that is a fixed linear function of the features
//! alone. By construction there are no hidden confounders and, at the
//! default `tau = 0`, no effect of the protected attribute on the outcome.
//! `tau` and `noise_sd` extend the generator for effect-recovery checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Cell, ColumnKind, ColumnRole, ColumnSchema, Dataset};
use crate::error::{Error, Result};
use crate::glm::expit;

pub const N_FEATURES: usize = 5;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Injected effect of the protected indicator on the outcome.
    pub tau: f64,
    /// Standard deviation of additive outcome noise.
    pub noise_sd: f64,
    /// Fixed outcome weights; drawn uniformly on [0,1] per seed when absent.
    pub weight_vector: Option<[f64; N_FEATURES]>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            seed: 0,
            tau: 0.0,
            noise_sd: 0.0,
            weight_vector: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    /// Encoded dataset, ready for the estimators.
    pub dataset: Dataset,
    /// The outcome weight vector actually used.
    pub weights: [f64; N_FEATURES],
}

pub fn synth_schema() -> Vec<ColumnSchema> {
    let mut schema: Vec<ColumnSchema> = (1..=N_FEATURES)
        .map(|i| ColumnSchema::new(&format!("x{i}"), ColumnKind::Numeric, ColumnRole::Feature))
        .collect();
    schema.push(
        ColumnSchema::new("a", ColumnKind::Binary, ColumnRole::Protected).with_treated_level("1"),
    );
    schema.push(ColumnSchema::new("y", ColumnKind::Numeric, ColumnRole::Outcome));
    schema
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.n < 10 {
        return Err(Error::InvalidConfig(format!(
            "synthetic n must be >= 10, got {}",
            cfg.n
        )));
    }
    if !cfg.noise_sd.is_finite() || cfg.noise_sd < 0.0 {
        return Err(Error::InvalidConfig("noise_sd must be >= 0".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = match cfg.weight_vector {
        Some(w) => w,
        None => {
            let mut w = [0.0; N_FEATURES];
            for slot in &mut w {
                *slot = rng.random::<f64>();
            }
            w
        }
    };

    let mut xs: Vec<Vec<Cell>> = vec![Vec::with_capacity(cfg.n); N_FEATURES];
    let mut a_col = Vec::with_capacity(cfg.n);
    let mut y_col = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let mut sum = 0.0;
        let mut dot = 0.0;
        for (j, col) in xs.iter_mut().enumerate() {
            let x: f64 = rng.sample(StandardNormal);
            sum += x;
            dot += x * weights[j];
            col.push(Cell::Num(x));
        }
        let a = u8::from(rng.random::<f64>() < expit(sum));
        let eps: f64 = rng.sample(StandardNormal);
        let y = dot + cfg.tau * f64::from(a) + cfg.noise_sd * eps;
        a_col.push(Cell::Cat(a.to_string()));
        y_col.push(Cell::Num(y));
    }

    let mut columns = xs;
    columns.push(a_col);
    columns.push(y_col);
    let dataset = Dataset::from_columns(synth_schema(), columns)?.one_hot_encode()?;
    Ok(SynthData { dataset, weights })
}
