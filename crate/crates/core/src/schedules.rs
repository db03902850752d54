//! Noise schedules.
//!
//! Three families are supported:
//!
//! * `Linear`: β_t rises linearly from `beta_min` at t = 1 to `beta_max` at t = T.
//! * `Jsd`: β_t = 1/t, or β_t = 1/(T − t + 1) under the reversed convention.
//! * `Trig`: the quarter-circle schedule, ᾱ_t = cos²(η_t) with η_t = (t/T)·π/2.
//!
//! Every family is tabulated once at construction. Besides ᾱ_t and β_t each
//! schedule carries the signal/noise coefficients √ᾱ_t and √(1 − ᾱ_t) and the
//! arc angle η_t whose cosine and sine they are. For `Trig` the coefficients
//! are cos(η_t) and sin(η_t) evaluated directly, with exact endpoints.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which reading of the JSD schedule to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JsdConvention {
    /// β_t = 1/t. β_1 = 1, so ᾱ_t = 0 for every t ≥ 1.
    #[default]
    AsWritten,
    /// β_t = 1/(T − t + 1), giving ᾱ_t = (T − t)/T.
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleFamily {
    Linear { beta_min: f64, beta_max: f64 },
    Jsd(JsdConvention),
    Trig,
}

/// Default linear endpoints.
pub const LINEAR_BETA_MIN: f64 = 1e-4;
pub const LINEAR_BETA_MAX: f64 = 0.02;

/// Arc angle of step `t` out of `total`: (t/T)·π/2.
pub fn eta(t: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::InvalidArgument("step count T must be >= 1".into()));
    }
    if t > total {
        return Err(Error::StepOutOfRange { t, max: total });
    }
    if t == total {
        return Ok(FRAC_PI_2);
    }
    Ok(t as f64 / total as f64 * FRAC_PI_2)
}

/// A tabulated noise schedule over t ∈ {0, …, T}.
#[derive(Debug, Clone)]
pub struct Schedule {
    family: ScheduleFamily,
    total: usize,
    eta: Vec<f64>,
    alpha_bar: Vec<f64>,
    // beta[0] is unused and holds 0.0
    beta: Vec<f64>,
    signal: Vec<f64>,
    noise: Vec<f64>,
}

impl Schedule {
    pub fn new(family: ScheduleFamily, total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::InvalidArgument("step count T must be >= 1".into()));
        }
        match family {
            ScheduleFamily::Trig => Ok(Self::build_trig(total)),
            ScheduleFamily::Linear { beta_min, beta_max } => {
                let ok = |b: f64| b > 0.0 && b < 1.0;
                if !ok(beta_min) || !ok(beta_max) {
                    return Err(Error::InvalidArgument(format!(
                        "linear betas must lie in (0, 1), got {beta_min} and {beta_max}"
                    )));
                }
                if beta_min > beta_max {
                    return Err(Error::InvalidArgument(
                        "beta_min must not exceed beta_max".into(),
                    ));
                }
                let betas = (1..=total).map(|t| {
                    if total == 1 {
                        return beta_min;
                    }
                    let f = (t - 1) as f64 / (total - 1) as f64;
                    // lerp form keeps both endpoints exact
                    beta_min * (1.0 - f) + beta_max * f
                });
                Ok(Self::from_betas(family, total, betas))
            }
            ScheduleFamily::Jsd(conv) => {
                let betas = (1..=total).map(|t| match conv {
                    JsdConvention::AsWritten => 1.0 / t as f64,
                    JsdConvention::Reversed => 1.0 / (total - t + 1) as f64,
                });
                Ok(Self::from_betas(family, total, betas))
            }
        }
    }

    pub fn trig(total: usize) -> Result<Self> {
        Self::new(ScheduleFamily::Trig, total)
    }

    pub fn linear(total: usize) -> Result<Self> {
        Self::new(
            ScheduleFamily::Linear {
                beta_min: LINEAR_BETA_MIN,
                beta_max: LINEAR_BETA_MAX,
            },
            total,
        )
    }

    fn build_trig(total: usize) -> Self {
        let n = total + 1;
        let eta: Vec<f64> = (0..n).map(|t| eta(t, total).unwrap()).collect();
        let mut signal = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        for (t, &e) in eta.iter().enumerate() {
            if t == 0 {
                signal.push(1.0);
                noise.push(0.0);
            } else if t == total {
                signal.push(0.0);
                noise.push(1.0);
            } else {
                signal.push(e.cos());
                noise.push(e.sin());
            }
        }
        let alpha_bar: Vec<f64> = signal.iter().map(|c| c * c).collect();
        let mut beta = vec![0.0; n];
        for t in 1..n {
            beta[t] = if t == total {
                1.0
            } else {
                // cos²a − cos²b = sin(a + b)·sin(b − a); no cancellation and no 0/0
                let (prev, cur) = (eta[t - 1], eta[t]);
                let c_prev = signal[t - 1];
                (cur + prev).sin() * (cur - prev).sin() / (c_prev * c_prev)
            };
        }
        Self {
            family: ScheduleFamily::Trig,
            total,
            eta,
            alpha_bar,
            beta,
            signal,
            noise,
        }
    }

    fn from_betas(family: ScheduleFamily, total: usize, betas: impl Iterator<Item = f64>) -> Self {
        let mut beta = vec![0.0];
        beta.extend(betas);
        let mut alpha_bar = Vec::with_capacity(total + 1);
        let mut acc = 1.0;
        alpha_bar.push(acc);
        for &b in &beta[1..] {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        let signal: Vec<f64> = alpha_bar.iter().map(|a| a.sqrt()).collect();
        let noise: Vec<f64> = alpha_bar.iter().map(|a| (1.0 - a).max(0.0).sqrt()).collect();
        let eta = signal
            .iter()
            .zip(&noise)
            .map(|(c, s)| s.atan2(*c))
            .collect();
        Self {
            family,
            total,
            eta,
            alpha_bar,
            beta,
            signal,
            noise,
        }
    }

    pub fn family(&self) -> ScheduleFamily {
        self.family
    }

    /// Total number of diffusion steps T.
    pub fn steps(&self) -> usize {
        self.total
    }

    pub fn is_trig(&self) -> bool {
        matches!(self.family, ScheduleFamily::Trig)
    }

    fn check(&self, t: usize) -> Result<()> {
        if t > self.total {
            Err(Error::StepOutOfRange { t, max: self.total })
        } else {
            Ok(())
        }
    }

    /// Arc angle η_t; for non-trig families the angle whose cosine is √ᾱ_t.
    pub fn eta(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.eta[t])
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.alpha_bar[t])
    }

    /// α_t = 1 − β_t, defined for t ≥ 1.
    pub fn alpha(&self, t: usize) -> Result<f64> {
        Ok(1.0 - self.beta(t)?)
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::Domain { op: "beta", t });
        }
        self.check(t)?;
        Ok(self.beta[t])
    }

    /// Data coefficient √ᾱ_t (cos η_t).
    pub fn signal(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.signal[t])
    }

    /// Noise coefficient √(1 − ᾱ_t) (sin η_t).
    pub fn noise(&self, t: usize) -> Result<f64> {
        self.check(t)?;
        Ok(self.noise[t])
    }

    pub fn eta_table(&self) -> &[f64] {
        &self.eta
    }

    pub fn alpha_bar_table(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// β table with β_0 reported as 0.
    pub fn beta_table(&self) -> &[f64] {
        &self.beta
    }

    /// Write `t,eta,alpha_bar,beta` rows for t = 0..=T. β_0 is written as 0.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,eta,alpha_bar,beta")?;
        for t in 0..=self.total {
            writeln!(
                w,
                "{},{},{},{}",
                t,
                crate::fmt_f64(self.eta[t]),
                crate::fmt_f64(self.alpha_bar[t]),
                crate::fmt_f64(self.beta[t])
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn eta_examples() {
        assert_eq!(eta(0, 1000).unwrap(), 0.0);
        assert_eq!(eta(1000, 1000).unwrap(), FRAC_PI_2);
        assert!((eta(500, 1000).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!(matches!(eta(1001, 1000), Err(Error::StepOutOfRange { .. })));
        assert!(eta(0, 0).is_err());
    }

    #[test]
    fn trig_alpha_bar_examples() {
        let s = Schedule::trig(1000).unwrap();
        assert!((s.alpha_bar(500).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s.alpha_bar(0).unwrap(), 1.0);
        assert_eq!(s.alpha_bar(1000).unwrap(), 0.0);
        assert!(s.alpha_bar(1001).is_err());
    }

    #[test]
    fn linear_alpha_bar_and_endpoints() {
        let s = Schedule::linear(1000).unwrap();
        assert!((s.alpha_bar(1).unwrap() - 0.9999).abs() < 1e-15);
        assert_eq!(s.beta(1).unwrap(), 1e-4);
        assert_eq!(s.beta(1000).unwrap(), 0.02);
    }

    #[test]
    fn beta_examples() {
        let s = Schedule::trig(1000).unwrap();
        assert_eq!(s.beta(1000).unwrap(), 1.0);
        let expected = (PI / 2000.0).sin().powi(2);
        let b1 = s.beta(1).unwrap();
        assert!((b1 - expected).abs() / expected < 1e-12, "{b1} vs {expected}");
        assert!((b1 - 2.4674e-6).abs() < 1e-9);
        assert!(matches!(s.beta(0), Err(Error::Domain { .. })));

        let jsd = Schedule::new(ScheduleFamily::Jsd(JsdConvention::AsWritten), 1000).unwrap();
        assert_eq!(jsd.beta(2).unwrap(), 0.5);
        assert_eq!(jsd.alpha_bar(1).unwrap(), 0.0);
    }

    #[test]
    fn jsd_reversed_is_linear_in_alpha_bar() {
        let s = Schedule::new(ScheduleFamily::Jsd(JsdConvention::Reversed), 100).unwrap();
        for t in 0..=100 {
            let expect = (100 - t) as f64 / 100.0;
            assert!((s.alpha_bar(t).unwrap() - expect).abs() < 1e-14);
        }
        assert_eq!(s.beta(100).unwrap(), 1.0);
    }

    #[test]
    fn trig_recomposition_and_range() {
        let s = Schedule::trig(1000).unwrap();
        let mut prod = 1.0;
        for t in 1..=1000 {
            let b = s.beta(t).unwrap();
            assert!(b > 0.0 && b <= 1.0);
            prod *= 1.0 - b;
            let target = s.alpha_bar(t).unwrap();
            assert!((prod - target).abs() < 1e-10, "t={t}");
            if t < 1000 {
                assert!((prod - target).abs() / target < 1e-10, "relative t={t}");
            }
        }
    }

    #[test]
    fn monotone_trig_and_linear() {
        for s in [Schedule::trig(1000).unwrap(), Schedule::linear(1000).unwrap()] {
            for t in 0..1000 {
                assert!(s.alpha_bar(t + 1).unwrap() < s.alpha_bar(t).unwrap());
            }
        }
    }

    #[test]
    fn non_trig_angles_match_coefficients() {
        let s = Schedule::linear(1000).unwrap();
        for t in [0, 1, 10, 500, 1000] {
            let e = s.eta(t).unwrap();
            assert!((e.cos() - s.signal(t).unwrap()).abs() < 1e-12);
            assert!((e.sin() - s.noise(t).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_linear_config() {
        let bad = ScheduleFamily::Linear {
            beta_min: 0.0,
            beta_max: 0.02,
        };
        assert!(Schedule::new(bad, 10).is_err());
        assert!(Schedule::trig(0).is_err());
    }

    #[test]
    fn csv_has_one_row_per_step() {
        let s = Schedule::trig(4).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("t,eta,alpha_bar,beta\n0,"));
        assert!(!text.contains('\r'));
    }
}
