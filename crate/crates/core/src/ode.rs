//! Dormand-Prince 5(4) integrator with dense output and state-dependent
//! step control.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: 1e-3,
            max_steps: 5_000_000,
        }
    }
}

/// State-dependent step policy: tolerance factor and step cap at `(t, y)`.
pub trait StepPolicy {
    fn tol_factor(&self, _t: f64, _y: &[f64]) -> f64 {
        1.0
    }
    fn max_step(&self, _t: f64, _y: &[f64]) -> f64 {
        f64::INFINITY
    }
}

pub struct Uniform;

impl StepPolicy for Uniform {}

/// One accepted step with its continuous extension.
#[derive(Clone, Debug)]
struct Segment {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

#[derive(Clone, Debug)]
pub struct OdeSolution {
    segments: Vec<Segment>,
    pub t_end: f64,
    pub y_end: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
}

impl OdeSolution {
    /// Dense output at `t` within the integrated span.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let i = self.segments.partition_point(|s| s.t0 + s.h < t).min(self.segments.len() - 1);
        let s = &self.segments[i];
        let th = (t - s.t0) / s.h;
        let th1 = 1.0 - th;
        (0..s.r[0].len())
            .map(|j| s.r[0][j] + th * (s.r[1][j] + th1 * (s.r[2][j] + th * (s.r[3][j] + th1 * s.r[4][j]))))
            .collect()
    }

    /// Accepted step start times and the final time.
    pub fn mesh(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.segments.iter().map(|s| s.t0).collect();
        m.push(self.t_end);
        m
    }
}

fn axpy_all(y: &[f64], h: f64, ks: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut out = y.to_vec();
    for (k, &c) in ks.iter().zip(coeffs) {
        if c != 0.0 {
            for (o, v) in out.iter_mut().zip(k) {
                *o += h * c * v;
            }
        }
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`.
pub fn dopri5<F, P>(f: F, t0: f64, y0: &[f64], t1: f64, opts: &OdeOptions, policy: &P) -> Result<OdeSolution>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
    P: StepPolicy,
{
    let n = y0.len();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = f(t, &y);
    let mut h = opts.h_init.min(t1 - t0);
    let mut segments = Vec::new();
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut min_step = f64::INFINITY;
    let mut fac_old = 1e-4f64;
    while t < t1 {
        if accepted + rejected >= opts.max_steps {
            return Err(Error::StiffnessFailure {
                t,
                detail: format!("step budget {} exhausted", opts.max_steps),
            });
        }
        h = h.min(policy.max_step(t, &y)).min(t1 - t);
        let h_floor = 1e-14 * t.abs().max(1.0);
        if h < h_floor {
            return Err(Error::StiffnessFailure {
                t,
                detail: format!("step size {h:e} underflow at y = {y:?}"),
            });
        }
        let mut ks: Vec<Vec<f64>> = vec![k1.clone()];
        for s in 1..7 {
            let ys = axpy_all(&y, h, &ks, &A[s][..s]);
            ks.push(f(t + C[s] * h, &ys));
        }
        let y_new = axpy_all(&y, h, &ks[..6], &A[6][..6]);
        let tf = policy.tol_factor(t, &y);
        let mut err = 0.0;
        for j in 0..n {
            let mag = y[j].abs().max(y_new[j].abs());
            // never ask for more than a few ulps
            let sc = (tf * (opts.atol + opts.rtol * mag)).max(8.0 * f64::EPSILON * mag);
            let e: f64 = h * (0..7).map(|s| E[s] * ks[s][j]).sum::<f64>();
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            rejected += 1;
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            // Lund stabilization as in the reference implementation
            let fac = (0.9 * err.max(1e-10).powf(-0.17) * fac_old.powf(0.04)).clamp(0.2, 10.0);
            fac_old = err.max(1e-4);
            let k7 = ks[6].clone();
            let ydiff: Vec<f64> = y_new.iter().zip(&y).map(|(a, b)| a - b).collect();
            let bspl: Vec<f64> = (0..n).map(|j| h * ks[0][j] - ydiff[j]).collect();
            let r4: Vec<f64> = (0..n).map(|j| ydiff[j] - h * k7[j] - bspl[j]).collect();
            let r5: Vec<f64> = (0..n).map(|j| h * (0..7).map(|s| D[s] * ks[s][j]).sum::<f64>()).collect();
            segments.push(Segment {
                t0: t,
                h,
                r: [y.clone(), ydiff, bspl, r4, r5],
            });
            min_step = min_step.min(h);
            accepted += 1;
            t = if t1 - (t + h) < 1e-15 * t1.abs().max(1.0) { t1 } else { t + h };
            y = y_new;
            k1 = k7;
            h *= fac;
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Ok(OdeSolution {
        segments,
        t_end: t,
        y_end: y,
        accepted,
        rejected,
        min_step,
    })
}
