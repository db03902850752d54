//! Deterministic toy data.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{GaussianMixture, MixtureComponent};
use crate::rng::SeededRng;
use crate::Batch;

pub const RING_MODES: usize = 8;
pub const RING_RADIUS: f64 = 4.0;
pub const RING_STD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetKind {
    GaussianRing,
    SwissRoll,
    Checkerboard,
    Mixture { mixture: GaussianMixture },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    #[default]
    Standardize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    pub seed: u64,
    pub normalization: Normalization,
}

/// Something that can produce i.i.d. data batches from a seed.
pub trait DataSource: Sync {
    fn draw(&self, n: usize, seed: u64) -> Result<Batch>;
}

impl DataSource for GaussianMixture {
    fn draw(&self, n: usize, seed: u64) -> Result<Batch> {
        self.sample(n, seed)
    }
}

impl DataSource for DatasetSpec {
    fn draw(&self, n: usize, seed: u64) -> Result<Batch> {
        generate(&DatasetSpec {
            n,
            seed,
            ..self.clone()
        })
    }
}

/// The 8-mode ring as a mixture. With `standardize` the description is
/// rescaled by the analytic per-coordinate standard deviation √(R²/2 + σ²).
pub fn ring_mixture(standardize: bool) -> GaussianMixture {
    let scale = if standardize {
        1.0 / (RING_RADIUS * RING_RADIUS / 2.0 + RING_STD * RING_STD).sqrt()
    } else {
        1.0
    };
    let components = (0..RING_MODES)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / RING_MODES as f64;
            MixtureComponent {
                weight: 1.0 / RING_MODES as f64,
                mean: vec![scale * RING_RADIUS * a.cos(), scale * RING_RADIUS * a.sin()],
                variance: (scale * RING_STD).powi(2),
            }
        })
        .collect();
    GaussianMixture::new(components).expect("ring mixture is valid")
}

/// Analytic mixture for specs that have one.
pub fn analytic_mixture(spec: &DatasetSpec) -> Option<GaussianMixture> {
    match &spec.kind {
        DatasetKind::GaussianRing => Some(ring_mixture(spec.normalization == Normalization::Standardize)),
        DatasetKind::Mixture { mixture } => match spec.normalization {
            Normalization::None => Some(mixture.clone()),
            Normalization::Standardize => None,
        },
        _ => None,
    }
}

fn swiss_roll(n: usize, rng: &mut SeededRng) -> Batch {
    let mut out = Batch::zeros((n, 2));
    for mut row in out.rows_mut() {
        let t = 1.5 * PI * (1.0 + 2.0 * rng.uniform());
        row[0] = t * t.cos() + 0.5 * rng.normal();
        row[1] = t * t.sin() + 0.5 * rng.normal();
    }
    out
}

fn checkerboard(n: usize, rng: &mut SeededRng) -> Batch {
    // 4x4 board on [-4, 4)^2, filled squares where (i + j) is even
    let mut out = Batch::zeros((n, 2));
    for mut row in out.rows_mut() {
        loop {
            let x = 8.0 * rng.uniform() - 4.0;
            let y = 8.0 * rng.uniform() - 4.0;
            let (i, j) = ((x + 4.0) as i64 / 2, (y + 4.0) as i64 / 2);
            if (i + j) % 2 == 0 {
                row[0] = x;
                row[1] = y;
                break;
            }
        }
    }
    out
}

/// Per-coordinate standardization to zero mean and unit population variance.
pub fn standardize(x: &mut Batch) {
    let n = x.nrows() as f64;
    for mut col in x.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
        // second pass removes the residual mean left by rounding
        let resid = col.sum() / n;
        col.mapv_inplace(|v| v - resid);
        let var = col.iter().map(|v| v * v).sum::<f64>() / n;
        if var > 0.0 {
            let sd = var.sqrt();
            col.mapv_inplace(|v| v / sd);
        }
    }
}

pub fn generate(spec: &DatasetSpec) -> Result<Batch> {
    if spec.n == 0 {
        return Err(Error::InvalidArgument("dataset size must be >= 1".into()));
    }
    let mut rng = SeededRng::new(spec.seed);
    let mut x = match &spec.kind {
        DatasetKind::GaussianRing => ring_mixture(false).sample(spec.n, rng.split(0).seed())?,
        DatasetKind::SwissRoll => swiss_roll(spec.n, &mut rng),
        DatasetKind::Checkerboard => checkerboard(spec.n, &mut rng),
        DatasetKind::Mixture { mixture } => mixture.sample(spec.n, rng.split(0).seed())?,
    };
    if spec.normalization == Normalization::Standardize {
        standardize(&mut x);
    }
    Ok(x)
}

/// `x0,x1,...` header followed by one row per point.
pub fn write_csv<W: Write>(x: &Batch, mut w: W) -> Result<()> {
    let header: Vec<String> = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in x.rows() {
        let cells: Vec<String> = row.iter().map(|v| crate::fmt_f64(*v)).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}
