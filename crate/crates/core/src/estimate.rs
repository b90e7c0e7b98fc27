//! Sup-norm classification of function-valued nets.

use serde::{Deserialize, Serialize};

use crate::asymptotic::{estimate_order, estimate_order_floored, AsymptoticFit, EpsGrid, OrderConfig};
use crate::domain::{cartesian, sup_norm_with, BoxDomain};
use crate::error::Result;
use crate::net::{map_grid, Net};
use crate::quad::QuadOptions;
use crate::smooth::SmoothFn;

/// Numerical knobs shared by the classification and association routines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub grid: EpsGrid,
    pub order: OrderConfig,
    /// Lattice points per axis for sup norms.
    pub lattice: usize,
    pub parallel: bool,
    /// Residuals below `noise_rel × reference` count as roundoff.
    pub noise_rel: f64,
    /// Absolute tolerance on extrapolated pairings.
    pub pairing_tol: f64,
    pub allow_fd: bool,
    pub quad: QuadOptions,
    /// Ambient lattice points per axis for overlap samples; the built-in
    /// density for the dimension when unset.
    #[serde(default)]
    pub overlap_lattice: Option<usize>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            grid: EpsGrid::default(),
            order: OrderConfig::default(),
            lattice: 201,
            parallel: false,
            noise_rel: 1e-12,
            pairing_tol: 1e-3,
            allow_fd: false,
            quad: QuadOptions::with_tol(1e-11, 1e-15),
            overlap_lattice: None,
        }
    }
}

impl Settings {
    pub fn with_grid(mut self, grid: EpsGrid) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_lattice(mut self, n: usize) -> Self {
        self.lattice = n;
        self
    }

    pub fn with_overlap_lattice(mut self, n: usize) -> Self {
        self.overlap_lattice = Some(n);
        self
    }

    /// Ambient lattice points per axis for overlap samples in dimension `dim`.
    pub fn overlap_lattice_for(&self, dim: usize) -> usize {
        self.overlap_lattice.unwrap_or(match dim {
            0 | 1 => 256,
            2 => 24,
            _ => 10,
        })
    }

    /// Lattice points per axis in dimension `dim`; capped in 2-D and 3-D.
    pub fn lattice_for(&self, dim: usize) -> usize {
        match dim {
            0 | 1 => self.lattice,
            2 => self.lattice.min(41),
            _ => self.lattice.min(13),
        }
    }
}

/// Sup-norm samples of a net and their fit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetFit {
    pub alpha: Vec<u8>,
    pub sups: Vec<f64>,
    pub fit: AsymptoticFit,
    pub finite_difference: bool,
}

/// Extra sample points at ε-scale around each focus point inside `domain`.
pub fn focus_points(focus: &[Vec<f64>], eps: f64, domain: &BoxDomain) -> Vec<Vec<f64>> {
    let n = domain.dim();
    let offsets: Vec<f64> = match n {
        1 => (-80..=80).map(|i| i as f64 * 0.05).collect(),
        2 => (-12..=12).map(|i| i as f64 * 0.25).collect(),
        _ => (-6..=6).map(|i| i as f64 * 0.5).collect(),
    };
    let mut out = Vec::new();
    for p in focus {
        if p.len() != n {
            continue;
        }
        let axes: Vec<Vec<f64>> = p.iter().map(|c| offsets.iter().map(|o| c + eps * o).collect()).collect();
        out.extend(cartesian(&axes).into_iter().filter(|q| domain.contains(q)));
    }
    out
}

/// `sup |∂^α u_ε|` over the lattice plus focus refinement points.
pub fn sup_at(f: &SmoothFn, alpha: &[u8], domain: &BoxDomain, focus: &[Vec<f64>], eps: f64, settings: &Settings) -> Result<(f64, bool)> {
    let s = sup_norm_with(f, alpha, domain, settings.lattice_for(domain.dim()), settings.allow_fd)?;
    let mut best = s.value;
    let mut fd = s.finite_difference;
    for x in focus_points(focus, eps, domain) {
        let (v, used) = f.partial_or_fd(alpha, &x, settings.allow_fd)?;
        fd |= used;
        best = best.max(v.abs());
    }
    Ok((best, fd))
}

/// Sup norms of `∂^α u_ε` over the grid.
pub fn net_sups(net: &Net, alpha: &[u8], domain: &BoxDomain, settings: &Settings) -> Result<(Vec<f64>, bool)> {
    let rows = map_grid(settings.grid.values(), settings.parallel, |e| {
        sup_at(&net.at(e), alpha, domain, net.focus(), e, settings)
    });
    let mut sups = Vec::with_capacity(rows.len());
    let mut fd = false;
    for r in rows {
        let (v, used) = r?;
        sups.push(v);
        fd |= used;
    }
    Ok((sups, fd))
}

/// Fits the growth of `sup_K |∂^α u_ε|`.
///
/// When `reference` is given the net is a residual of quantities of that
/// size, and sups below `noise_rel × reference` count as roundoff.
pub fn classify_net(net: &Net, alpha: &[u8], domain: &BoxDomain, settings: &Settings, reference: Option<f64>) -> Result<NetFit> {
    let (sups, fd) = net_sups(net, alpha, domain, settings)?;
    let fit = fit_sups(settings.grid.values(), &sups, &settings.order, reference.map(|r| settings.noise_rel * r))?;
    Ok(NetFit {
        alpha: alpha.to_vec(),
        sups,
        fit,
        finite_difference: fd,
    })
}

pub fn fit_sups(grid: &[f64], sups: &[f64], cfg: &OrderConfig, floor: Option<f64>) -> Result<AsymptoticFit> {
    let samples: Vec<(f64, f64)> = grid.iter().copied().zip(sups.iter().copied()).collect();
    match floor {
        Some(fl) => estimate_order_floored(&samples, fl, cfg),
        None => estimate_order(&samples, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    #[test]
    fn spike_is_found_through_focus_points() {
        // u_ε(x) = ε^{-1} exp(−((x − 0.0123)/ε)²): off-lattice peak
        let c = 0.0123;
        let net = Net::new(1, move |e| {
            SmoothFn::new(1, crate::smooth::UNLIMITED, move |x, k| {
                let u = Jet::variable(1, k, 0, x[0]).add_scalar(-c).scale(1.0 / e);
                u.mul(&u).neg().exp().scale(1.0 / e)
            })
        })
        .with_focus(vec![vec![c]]);
        let s = Settings::default();
        let nf = classify_net(&net, &[0], &BoxDomain::interval(-1.0, 1.0), &s, None).unwrap();
        assert!((nf.fit.slope + 1.0).abs() < 0.01, "{}", nf.fit.slope);
    }
}
