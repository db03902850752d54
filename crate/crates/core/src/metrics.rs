//! Sample-quality distances and reconstruction-error curves.

use std::io::Write;

use ndarray::{ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::datasets::DataSource;
use crate::denoiser::Denoiser;
use crate::diffusion::{diffuse_trig, invert_to_eps, invert_to_x0};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, per_row_normals, SeededRng};
use crate::schedules::Schedule;
use crate::Batch;

/// Largest point set used by the median-distance bandwidth heuristic.
pub const MEDIAN_HEURISTIC_MAX_POINTS: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceReport {
    pub sliced_wasserstein: f64,
    pub mmd_rbf: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub n_projections: usize,
    pub bandwidth: f64,
    pub seed: u64,
}

fn check_pair(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Result<()> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::InvalidArgument("distance needs non-empty batches".into()));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "distance between dim {} and dim {}",
            a.ncols(),
            b.ncols()
        )));
    }
    Ok(())
}

/// Rows of `x` picked without replacement, `n` of them, order preserved.
fn subsample(x: ArrayView2<f64>, n: usize, seed: u64) -> Batch {
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    let mut rng = SeededRng::new(seed);
    for i in 0..n {
        let j = i + rng.below(idx.len() - i);
        idx.swap(i, j);
    }
    let mut keep = idx[..n].to_vec();
    keep.sort_unstable();
    x.select(Axis(0), &keep)
}

fn sorted_projection(x: ArrayView2<f64>, dir: ArrayView1<f64>) -> Vec<f64> {
    let mut p: Vec<f64> = x.dot(&dir).to_vec();
    p.sort_unstable_by(f64::total_cmp);
    p
}

/// Mean over random unit directions of the 1-D 2-Wasserstein distance
/// between the projected samples.
///
/// Unequal counts are handled by subsampling the larger set (seeded).
pub fn sliced_wasserstein(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    n_projections: usize,
    seed: u64,
) -> Result<f64> {
    check_pair(&a, &b)?;
    if n_projections == 0 {
        return Err(Error::InvalidArgument("n_projections must be >= 1".into()));
    }
    let n = a.nrows().min(b.nrows());
    let resample_seed = derive_seed(seed, 1);
    let a_owned;
    let b_owned;
    let (a, b) = match a.nrows().cmp(&b.nrows()) {
        std::cmp::Ordering::Greater => {
            a_owned = subsample(a, n, resample_seed);
            (a_owned.view(), b)
        }
        std::cmp::Ordering::Less => {
            b_owned = subsample(b, n, resample_seed);
            (a, b_owned.view())
        }
        std::cmp::Ordering::Equal => (a, b),
    };

    let dim = a.ncols();
    let mut rng = SeededRng::new(seed);
    let mut dirs = Batch::zeros((n_projections, dim));
    for mut d in dirs.rows_mut() {
        loop {
            d.iter_mut().for_each(|v| *v = rng.normal());
            let norm = d.dot(&d).sqrt();
            if norm > 0.0 {
                d /= norm;
                break;
            }
        }
    }
    let per_dir: Vec<f64> = (0..n_projections)
        .into_par_iter()
        .map(|k| {
            let pa = sorted_projection(a, dirs.row(k));
            let pb = sorted_projection(b, dirs.row(k));
            let sq: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).powi(2)).sum();
            (sq / n as f64).sqrt()
        })
        .collect();
    Ok(per_dir.iter().sum::<f64>() / n_projections as f64)
}

fn sq_dist(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(p, q)| (p - q).powi(2)).sum()
}

fn mean_kernel(x: ArrayView2<f64>, y: ArrayView2<f64>, gamma: f64) -> f64 {
    let rows: Vec<f64> = (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            y.rows()
                .into_iter()
                .map(|yj| (-gamma * sq_dist(xi, yj)).exp())
                .sum::<f64>()
        })
        .collect();
    rows.iter().sum::<f64>() / (x.nrows() * y.nrows()) as f64
}

/// Biased (V-statistic) estimate of squared MMD with the Gaussian kernel
/// k(x, y) = exp(−‖x − y‖²/(2h²)).
pub fn mmd_rbf(a: ArrayView2<f64>, b: ArrayView2<f64>, bandwidth: f64) -> Result<f64> {
    check_pair(&a, &b)?;
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be > 0, got {bandwidth}"
        )));
    }
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    Ok(mean_kernel(a, a, gamma) + mean_kernel(b, b, gamma) - 2.0 * mean_kernel(a, b, gamma))
}

/// Median pairwise distance over the union of `a` and `b`.
///
/// Sets larger than [`MEDIAN_HEURISTIC_MAX_POINTS`] are thinned by a fixed stride.
pub fn median_bandwidth(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    check_pair(&a, &b)?;
    let union = ndarray::concatenate(Axis(0), &[a, b]).map_err(|e| Error::Shape(e.to_string()))?;
    let n = union.nrows();
    let stride = n.div_ceil(MEDIAN_HEURISTIC_MAX_POINTS).max(1);
    let pts: Vec<_> = union.rows().into_iter().step_by(stride).collect();
    let mut d = Vec::with_capacity(pts.len() * pts.len() / 2);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d.push(sq_dist(pts[i], pts[j]).sqrt());
        }
    }
    if d.is_empty() {
        return Err(Error::InvalidArgument("median heuristic needs >= 2 points".into()));
    }
    d.sort_unstable_by(f64::total_cmp);
    let m = d.len();
    let med = if m % 2 == 1 {
        d[m / 2]
    } else {
        0.5 * (d[m / 2 - 1] + d[m / 2])
    };
    if !(med > 0.0) {
        return Err(Error::InvalidArgument("all points coincide; bandwidth undefined".into()));
    }
    Ok(med)
}

/// Both distances; `bandwidth = None` selects the median heuristic.
pub fn distance_report(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    n_projections: usize,
    bandwidth: Option<f64>,
    seed: u64,
) -> Result<DistanceReport> {
    let bandwidth = match bandwidth {
        Some(h) => h,
        None => median_bandwidth(a, b)?,
    };
    Ok(DistanceReport {
        sliced_wasserstein: sliced_wasserstein(a, b, n_projections, seed)?,
        mmd_rbf: mmd_rbf(a, b, bandwidth)?,
        n_a: a.nrows(),
        n_b: b.nrows(),
        n_projections,
        bandwidth,
        seed,
    })
}

/// Mean and standard deviation of the per-example squared reconstruction errors at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconRow {
    pub t: usize,
    pub err_x0_direct: f64,
    pub err_x0_derived: f64,
    pub err_eps_direct: f64,
    pub err_eps_derived: f64,
    pub std_x0_direct: f64,
    pub std_x0_derived: f64,
    pub std_eps_direct: f64,
    pub std_eps_derived: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReconTable {
    pub rows: Vec<ReconRow>,
}

impl ReconTable {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "t,err_x0_direct,err_x0_derived,err_eps_direct,err_eps_derived,\
             std_x0_direct,std_x0_derived,std_eps_direct,std_eps_derived"
        )?;
        for r in &self.rows {
            let vals = [
                r.err_x0_direct,
                r.err_x0_derived,
                r.err_eps_direct,
                r.err_eps_derived,
                r.std_x0_direct,
                r.std_x0_derived,
                r.std_eps_direct,
                r.std_eps_derived,
            ];
            let cells: Vec<String> = vals.iter().map(|v| crate::fmt_f64(*v)).collect();
            writeln!(w, "{},{}", r.t, cells.join(","))?;
        }
        Ok(())
    }
}

fn per_example_sq_error(a: &Batch, b: &Batch) -> Vec<f64> {
    a.rows()
        .into_iter()
        .zip(b.rows())
        .map(|(x, y)| sq_dist(x, y))
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Direct versus derived reconstruction errors of both heads over a grid of steps.
///
/// "Derived" means x̂0 recovered from the ε head by [`invert_to_x0`] and ε̂
/// recovered from the x0 head by [`invert_to_eps`]. Errors are per-example
/// squared Euclidean distances.
pub fn reconstruction_curves(
    den: &dyn Denoiser,
    data: &dyn DataSource,
    sched: &Schedule,
    n_per_t: usize,
    t_grid: &[usize],
    seed: u64,
) -> Result<ReconTable> {
    if n_per_t == 0 {
        return Err(Error::InvalidArgument("n_per_t must be >= 1".into()));
    }
    let total = sched.steps();
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if t == 0 || t >= total {
            return Err(Error::InvalidArgument(format!(
                "reconstruction step {t} outside 1..{total}"
            )));
        }
        let x0 = data.draw(n_per_t, derive_seed(seed, 2 * t as u64))?;
        let eps = per_row_normals(derive_seed(seed, 2 * t as u64 + 1), n_per_t, x0.ncols());
        let xt = diffuse_trig(x0.view(), eps.view(), t, sched)?;
        let (x0_hat, eps_hat) = den.denoise_step(xt.view(), t, sched)?;
        let x0_derived = invert_to_x0(xt.view(), eps_hat.view(), t, sched)?;
        let eps_derived = invert_to_eps(xt.view(), x0_hat.view(), t, sched)?;
        let (a, sa) = mean_std(&per_example_sq_error(&x0_hat, &x0));
        let (b, sb) = mean_std(&per_example_sq_error(&x0_derived, &x0));
        let (c, sc) = mean_std(&per_example_sq_error(&eps_hat, &eps));
        let (d, sd) = mean_std(&per_example_sq_error(&eps_derived, &eps));
        rows.push(ReconRow {
            t,
            err_x0_direct: a,
            err_x0_derived: b,
            err_eps_direct: c,
            err_eps_derived: d,
            std_x0_direct: sa,
            std_x0_derived: sb,
            std_eps_direct: sc,
            std_eps_derived: sd,
        });
    }
    Ok(ReconTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_sets_are_zero() {
        let a = per_row_normals(1, 200, 3);
        assert_eq!(sliced_wasserstein(a.view(), a.view(), 16, 0).unwrap(), 0.0);
        assert!(mmd_rbf(a.view(), a.view(), 0.7).unwrap().abs() < 1e-15);
    }

    #[test]
    fn shifted_point_masses() {
        let a = Batch::zeros((10, 1));
        let b = Batch::from_elem((10, 1), 2.5);
        let d = sliced_wasserstein(a.view(), b.view(), 5, 3).unwrap();
        assert!((d - 2.5).abs() < 1e-12);
    }

    #[test]
    fn four_point_mmd_by_hand() {
        let a = array![[0.0, 0.0], [0.0, 1.0]];
        let b = array![[10.0, 0.0], [10.0, 1.0]];
        let h: f64 = 0.5;
        let k = |d2: f64| (-d2 / (2.0 * h * h)).exp();
        // within-set: two self-pairs (k = 1) and two pairs at distance 1
        let within = (2.0 + 2.0 * k(1.0)) / 4.0;
        let cross = (2.0 * k(100.0) + 2.0 * k(101.0)) / 4.0;
        let expect = 2.0 * within - 2.0 * cross;
        let got = mmd_rbf(a.view(), b.view(), h).unwrap();
        assert!((got - expect).abs() < 1e-6);
        assert!((got - 2.0 * within).abs() < 1e-6);
    }

    #[test]
    fn huge_bandwidth_gives_zero() {
        let a = per_row_normals(4, 50, 2);
        let b = per_row_normals(5, 60, 2).mapv(|v| v + 3.0);
        assert!(mmd_rbf(a.view(), b.view(), 1e6).unwrap().abs() < 1e-6);
    }

    #[test]
    fn contract_errors() {
        let a = Batch::zeros((0, 2));
        let b = Batch::zeros((3, 2));
        assert!(sliced_wasserstein(a.view(), b.view(), 4, 0).is_err());
        assert!(sliced_wasserstein(b.view(), b.view(), 0, 0).is_err());
        assert!(mmd_rbf(b.view(), b.view(), 0.0).is_err());
        let c = Batch::zeros((3, 1));
        assert!(sliced_wasserstein(b.view(), c.view(), 4, 0).is_err());
    }

    #[test]
    fn unequal_counts_are_symmetric() {
        let a = per_row_normals(6, 300, 2);
        let b = per_row_normals(7, 170, 2).mapv(|v| v * 1.5);
        let ab = sliced_wasserstein(a.view(), b.view(), 32, 9).unwrap();
        let ba = sliced_wasserstein(b.view(), a.view(), 32, 9).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn median_bandwidth_small_case() {
        let a = array![[0.0], [1.0]];
        let b = array![[3.0]];
        // distances 1, 2, 3
        assert_eq!(median_bandwidth(a.view(), b.view()).unwrap(), 2.0);
    }
}
