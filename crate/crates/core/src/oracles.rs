//! Closed-form radial solutions and a finite-difference residual checker.
//!
//! Two exact families are available:
//!
//! * the entire solution for `q = 7`, `u = C √(1 + a r²)`. With
//!   `s = 1 + r²` one has `Δ s^m = s^{m−2}((4m² + 2m) s − 4m(m − 1))` in ℝ³,
//!   so `Δ√s = 2 s^{−1/2} + s^{−3/2}` and `Δ²√s = −15 s^{−7/2}`. Scaling gives
//!   `Δ²u = −15 C a² (1 + a r²)^{−7/2}`, which equals `−u⁻⁷` iff
//!   `15 a² C⁸ = 1`. The two normalizations used here are `a = 1,
//!   C = 15^{−1/8}` and `C = 1, a = 15^{−1/2}` (so `u(0) = 1` and
//!   `Δu(0) = 3a = 3/√15`, the threshold value of `Δu(0)` for `q = 7`);
//! * the singular power solution `u = A r^τ` for `1 < q < 3`, with
//!   `τ = 4/(q + 1)`, `K_q = τ(2 − τ)(τ + 1)(τ − 1)` and
//!   `A = K_q^{−1/(q+1)}`. Here `Δ²(r^τ) = τ(τ+1)(τ−2)(τ−1) r^{τ−4}`, the
//!   exponents match because `τ(q + 1) = 4`, and the amplitudes because
//!   `A^{q+1} K_q = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radial_ode::{series_start, ProblemParams, RadialState};

/// `(u, u', Δu, (Δu)')` at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactValues {
    pub u: f64,
    pub du: f64,
    pub v: f64,
    pub dv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExactSolution {
    /// `u = c √(1 + a r²)`, `q = 7`.
    EntireQ7 { c: f64, a: f64 },
    /// `u = A r^τ`.
    SingularPower { q: f64, amplitude: f64, tau: f64 },
}

/// `15^{−1/8}`: the multiple of `√(1 + r²)` solving the `q = 7` equation.
pub fn entire_q7_constant() -> f64 {
    15f64.powf(-0.125)
}

/// `Δu(0)` of the `u(0) = 1` entire solution for `q = 7`, i.e. `3/√15`.
pub fn entire_q7_threshold_beta() -> f64 {
    3.0 / 15f64.sqrt()
}

impl ExactSolution {
    pub fn entire_q7(normalized: bool) -> Self {
        if normalized {
            ExactSolution::EntireQ7 {
                c: 1.0,
                a: 15f64.powf(-0.5),
            }
        } else {
            ExactSolution::EntireQ7 {
                c: entire_q7_constant(),
                a: 1.0,
            }
        }
    }

    pub fn singular_power(q: f64) -> Result<Self> {
        let (tau, _, amplitude) = singular_power_constants(q)?;
        Ok(ExactSolution::SingularPower { q, amplitude, tau })
    }

    pub fn q(&self) -> f64 {
        match *self {
            ExactSolution::EntireQ7 { .. } => 7.0,
            ExactSolution::SingularPower { q, .. } => q,
        }
    }

    pub fn eval(&self, r: f64) -> ExactValues {
        match *self {
            ExactSolution::EntireQ7 { c, a } => {
                let s = 1.0 + a * r * r;
                let sq = s.sqrt();
                ExactValues {
                    u: c * sq,
                    du: c * a * r / sq,
                    v: c * a * (3.0 + 2.0 * a * r * r) / (s * sq),
                    dv: -c * a * a * r * (5.0 + 2.0 * a * r * r) / (s * s * sq),
                }
            }
            ExactSolution::SingularPower { amplitude, tau, .. } => {
                let u = amplitude * r.powf(tau);
                let lap = tau * (tau + 1.0);
                ExactValues {
                    u,
                    du: tau * u / r,
                    v: lap * u / (r * r),
                    dv: lap * (tau - 2.0) * u / (r * r * r),
                }
            }
        }
    }

    /// Initial-value problem reproducing the solution, and a seed state at
    /// `r` carrying the exact `u, u', Δu, (Δu)'`. The moment integrals come
    /// from the series start, which is exact to rounding for small `r`.
    pub fn seed_state(&self, r: f64) -> Result<(ProblemParams, RadialState)> {
        match *self {
            ExactSolution::EntireQ7 { c, a } => {
                let params = ProblemParams::new(7.0, 3.0 * c * a)?
                    .with_u0(c)
                    .with_r_seed(r);
                let mut seed = series_start(&params, r, 1e-12)?;
                let e = self.eval(r);
                seed.u = e.u;
                seed.du = e.du;
                seed.v = e.v;
                seed.dv = e.dv;
                Ok((params, seed))
            }
            ExactSolution::SingularPower { .. } => Err(Error::InvalidParams(
                "the singular power solution has no regular initial data".into(),
            )),
        }
    }

    /// `Δ²u` from the closed form (not from differences).
    pub fn bilaplacian(&self, r: f64) -> f64 {
        match *self {
            ExactSolution::EntireQ7 { c, a } => -15.0 * c * a * a * (1.0 + a * r * r).powf(-3.5),
            ExactSolution::SingularPower { amplitude, tau, .. } => {
                amplitude * tau * (tau + 1.0) * (tau - 2.0) * (tau - 1.0) * r.powf(tau - 4.0)
            }
        }
    }

    /// `Δ²u + u⁻ᑫ` evaluated in closed form.
    pub fn equation_residual(&self, r: f64) -> f64 {
        self.bilaplacian(r) + self.eval(r).u.powf(-self.q())
    }
}

/// `(u, u', Δu, (Δu)')` of the `q = 7` entire solution.
pub fn exact_entire_q7(r: f64, normalized: bool) -> ExactValues {
    ExactSolution::entire_q7(normalized).eval(r)
}

/// `(τ, K_q, A)` of the singular power solution.
pub fn singular_power_constants(q: f64) -> Result<(f64, f64, f64)> {
    if !(q > 1.0 && q < 3.0) {
        return Err(Error::OutOfRange(q));
    }
    let tau = 4.0 / (q + 1.0);
    let k = tau * (2.0 - tau) * (tau + 1.0) * (tau - 1.0);
    Ok((tau, k, k.powf(-1.0 / (q + 1.0))))
}

/// `(u, u', Δu, (Δu)')` of `A r^τ`.
pub fn exact_singular_power(q: f64, r: f64) -> Result<ExactValues> {
    Ok(ExactSolution::singular_power(q)?.eval(r))
}

/// Output of [`biharmonic_residual`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualGrid {
    /// Radii where the residual is defined (grid minus two points at each end).
    pub r: Vec<f64>,
    pub residual: Vec<f64>,
    pub max_abs: f64,
    /// Largest spacing of the input grid.
    pub max_spacing: f64,
}

/// Radial Laplacian by three-point differences on a nonuniform grid.
///
/// Returns values at indices `1..n−1` of the input.
fn radial_laplacian(r: &[f64], u: &[f64]) -> Vec<f64> {
    (1..r.len() - 1)
        .map(|i| {
            let h0 = r[i] - r[i - 1];
            let h1 = r[i + 1] - r[i];
            let denom = h0 * h1 * (h0 + h1);
            let d2 = 2.0 * (h0 * u[i + 1] - (h0 + h1) * u[i] + h1 * u[i - 1]) / denom;
            let d1 = (h0 * h0 * u[i + 1] + (h1 * h1 - h0 * h0) * u[i] - h1 * h1 * u[i - 1]) / denom;
            d2 + 2.0 * d1 / r[i]
        })
        .collect()
}

/// `Δ²u + u⁻ᑫ` on a radial grid, with `Δ²` the three-point radial Laplacian
/// applied twice (a five-point composite stencil).
pub fn biharmonic_residual(r: &[f64], u: &[f64], q: f64) -> Result<ResidualGrid> {
    if r.len() != u.len() {
        return Err(Error::InvalidParams(format!(
            "grid has {} radii but {} values",
            r.len(),
            u.len()
        )));
    }
    if r.len() < 5 {
        return Err(Error::GridTooCoarse(format!(
            "need at least 5 points, got {}",
            r.len()
        )));
    }
    if !r.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::GridTooCoarse(
            "radii must be strictly increasing".into(),
        ));
    }
    if !(r[1] > 0.0) {
        return Err(Error::InvalidParams(
            "interior radii must be positive".into(),
        ));
    }
    if u.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidParams(
            "u must be positive on the grid".into(),
        ));
    }
    let lap = radial_laplacian(r, u);
    let bilap = radial_laplacian(&r[1..r.len() - 1], &lap);
    let radii = r[2..r.len() - 2].to_vec();
    let residual: Vec<f64> = bilap
        .iter()
        .zip(&u[2..u.len() - 2])
        .map(|(b, &uu)| b + uu.powf(-q))
        .collect();
    let max_abs = residual.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let max_spacing = r.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok(ResidualGrid {
        r: radii,
        residual,
        max_abs,
        max_spacing,
    })
}
