//! Closed-form noise predictors for Gaussian-mixture priors.
//!
//! If `x0 ~ sum_k w_k N(mu_k, s_k^2 I)` then the noisy marginal is
//! `p_t(x) = sum_k w_k N(x; sqrt(ab) mu_k, (ab s_k^2 + 1 - ab) I)` and the
//! optimal noise prediction is `-sqrt(1 - ab) grad log p_t(x)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Grid,
    /// Isotropic variance `s_k^2`.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    components: Vec<GmmComponent>,
}

impl GmmPrior {
    pub fn new(mut components: Vec<GmmComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::Config("mixture needs at least one component".into()))?;
        let shape = first.mean.shape();
        if components.iter().any(|c| c.mean.shape() != shape) {
            return Err(Error::Dimension("mixture means differ in shape".into()));
        }
        if components.iter().any(|c| c.weight < 0.0 || c.variance < 0.0) {
            return Err(Error::Config(
                "mixture weights and variances must be non-negative".into(),
            ));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if total <= 0.0 {
            return Err(Error::Config("mixture weights sum to zero".into()));
        }
        for c in &mut components {
            c.weight /= total;
        }
        Ok(Self { components })
    }

    pub fn single(mean: Grid, variance: f64) -> Result<Self> {
        Self::new(vec![GmmComponent {
            weight: 1.0,
            mean,
            variance,
        }])
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.components[0].mean.shape()
    }

    /// `log p_t(x)` of the noisy marginal at `alpha_bar`.
    pub fn log_marginal(&self, x: &Grid, alpha_bar: f64) -> f64 {
        let d = x.data().len() as f64;
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let var = alpha_bar * c.variance + 1.0 - alpha_bar;
                let sq = sq_dist(x, &c.mean, alpha_bar.sqrt());
                c.weight.ln() - 0.5 * d * (2.0 * PI * var).ln() - 0.5 * sq / var
            })
            .collect();
        log_sum_exp(&logs)
    }

    fn responsibilities(&self, x: &Grid, alpha_bar: f64) -> Vec<(f64, f64)> {
        let d = x.data().len() as f64;
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                let var = alpha_bar * c.variance + 1.0 - alpha_bar;
                c.weight.ln() - 0.5 * d * var.ln() - 0.5 * sq_dist(x, &c.mean, alpha_bar.sqrt()) / var
            })
            .collect();
        let lse = log_sum_exp(&logs);
        self.components
            .iter()
            .zip(&logs)
            .map(|(c, l)| ((l - lse).exp(), alpha_bar * c.variance + 1.0 - alpha_bar))
            .collect()
    }

    /// Optimal noise prediction at noise level `alpha_bar`.
    pub fn eps(&self, x: &Grid, alpha_bar: f64) -> Result<Grid> {
        self.check(x)?;
        let sab = alpha_bar.sqrt();
        let s1 = (1.0 - alpha_bar).sqrt();
        let resp = self.responsibilities(x, alpha_bar);
        let mut out = Grid::zeros(x.channels(), x.height(), x.width());
        for (c, &(r, var)) in self.components.iter().zip(&resp) {
            if r == 0.0 {
                continue;
            }
            let k = s1 * r / var;
            for ((o, xv), mv) in out.data_mut().iter_mut().zip(x.data()).zip(c.mean.data()) {
                *o += k * (xv - sab * mv);
            }
        }
        Ok(out)
    }

    /// `upstream^T d eps / dx`, exact.
    pub fn eps_vjp(&self, x: &Grid, alpha_bar: f64, upstream: &Grid) -> Result<Grid> {
        self.check(x)?;
        x.check_same_shape(upstream, "vjp upstream")?;
        let sab = alpha_bar.sqrt();
        let s1 = (1.0 - alpha_bar).sqrt();
        let resp = self.responsibilities(x, alpha_bar);
        // g_k = -(x - sab mu_k) / v_k; J = s1 [sum r_k / v_k I - sum r_k g_k (g_k - gbar)^T]
        let n = x.data().len();
        let mut gbar = vec![0.0; n];
        let mut diag = 0.0;
        let mut dots = Vec::with_capacity(resp.len());
        for (c, &(r, var)) in self.components.iter().zip(&resp) {
            diag += r / var;
            let mut dot = 0.0;
            for i in 0..n {
                let g = -(x.data()[i] - sab * c.mean.data()[i]) / var;
                gbar[i] += r * g;
                dot += upstream.data()[i] * g;
            }
            dots.push(dot);
        }
        let mut out: Vec<f64> = upstream.data().iter().map(|u| diag * u).collect();
        for ((c, &(r, var)), dot) in self.components.iter().zip(&resp).zip(dots) {
            if r == 0.0 {
                continue;
            }
            for i in 0..n {
                let g = -(x.data()[i] - sab * c.mean.data()[i]) / var;
                out[i] -= r * dot * (g - gbar[i]);
            }
        }
        for v in &mut out {
            *v *= s1;
        }
        Grid::from_vec(x.channels(), x.height(), x.width(), out)
    }

    fn check(&self, x: &Grid) -> Result<()> {
        if x.shape() != self.shape() {
            return Err(Error::Dimension(format!(
                "state shape {:?} does not match prior {:?}",
                x.shape(),
                self.shape()
            )));
        }
        Ok(())
    }
}

fn sq_dist(x: &Grid, mean: &Grid, scale: f64) -> f64 {
    x.data()
        .iter()
        .zip(mean.data())
        .map(|(a, m)| (a - scale * m).powi(2))
        .sum()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
