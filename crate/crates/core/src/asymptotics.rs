//! Growth constant, second-order behaviour and scaling of global solutions.
//!
//! A global solution grows like `u ~ κ r²` with
//!
//! ```text
//! 6κ = γ = Δu(0) − ∫₀^∞ t u⁻ᑫ dt
//! ```
//!
//! and `u − κ r²` behaves like `r`, `r log r` or `r^{4−2q}` according to
//! whether `q` is above, at or below `3/2`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase_space::{phase_trajectory, PhasePath, P2};
use crate::radial_ode::{integrate, power_law_tail, Controls, ProblemParams, Trajectory};
use crate::shooting::gamma_limit;

fn require_global(traj: &Trajectory) -> Result<()> {
    if traj.is_global() {
        Ok(())
    } else {
        Err(Error::NotGlobal(format!("{:?}", traj.classification)))
    }
}

/// Least-squares fit of `values ≈ Σ cⱼ basisⱼ(r)`; returns coefficients and
/// the largest absolute residual.
fn lsq(rs: &[f64], values: &[f64], basis: &[Box<dyn Fn(f64) -> f64>]) -> Option<(Vec<f64>, f64)> {
    let (n, m) = (rs.len(), basis.len());
    if n < m {
        return None;
    }
    let mut a = DMatrix::from_fn(n, m, |i, j| basis[j](rs[i]));
    let mut scale = vec![1.0; m];
    for j in 0..m {
        let s = a.column(j).amax();
        if s > 0.0 {
            scale[j] = s;
            a.column_mut(j).scale_mut(1.0 / s);
        }
    }
    let b = DVector::from_column_slice(values);
    let x = a.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let resid = (&a * &x - &b).amax();
    let coeffs = x.iter().zip(&scale).map(|(c, s)| c / s).collect();
    Some((coeffs, resid))
}

fn power_basis(exponents: &[f64]) -> Vec<Box<dyn Fn(f64) -> f64>> {
    let mut out: Vec<Box<dyn Fn(f64) -> f64>> = vec![Box::new(|_| 1.0)];
    for &e in exponents {
        out.push(Box::new(move |r: f64| r.powf(-e)));
    }
    out
}

/// Sorted, deduplicated decay exponents in `(0, 2]`.
fn decay_exponents(candidates: &[f64]) -> Vec<f64> {
    let mut e: Vec<f64> = candidates
        .iter()
        .copied()
        .filter(|&x| x > 1e-9 && x <= 2.0 + 1e-9)
        .collect();
    e.sort_by(f64::total_cmp);
    e.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    e
}

/// Samples in the last decade `[R/10, R]` of a trajectory.
fn last_decade(traj: &Trajectory) -> &[crate::radial_ode::RadialState] {
    let r_end = traj.last().r;
    traj.window(r_end / 10.0, r_end)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    pub value: f64,
    pub error_bar: f64,
    /// Leading decay exponent of `u/r² − κ` used by the fit.
    pub rate: f64,
}

/// `κ` from extrapolating `u(r)/r²` over the last decade of samples against
/// `κ + Σ cⱼ r^{−eⱼ}`, with the exponents dictated by `q` (leading one
/// `min(1, 2q − 2)`; `log r / r` at `q = 3/2`).
///
/// The error bar is the fit's worst residual plus twice the change in `κ`
/// when only the upper half of the window is used.
pub fn kappa_from_growth(traj: &Trajectory, bound: Option<f64>) -> Result<KappaEstimate> {
    require_global(traj)?;
    let q = traj.params.q;
    let window = last_decade(traj);
    let rs: Vec<f64> = window.iter().map(|s| s.r).collect();
    let vals: Vec<f64> = window.iter().map(|s| s.u / (s.r * s.r)).collect();
    kappa_fit(q, &rs, &vals, bound)
}

fn kappa_fit(q: f64, rs: &[f64], vals: &[f64], bound: Option<f64>) -> Result<KappaEstimate> {
    let basis: Vec<Box<dyn Fn(f64) -> f64>> = if q == 1.5 {
        vec![
            Box::new(|_| 1.0),
            Box::new(|r: f64| r.ln() / r),
            Box::new(|r: f64| 1.0 / r),
            Box::new(|r: f64| 1.0 / (r * r)),
        ]
    } else {
        power_basis(&decay_exponents(&[2.0 * q - 2.0, 1.0, 4.0 * q - 4.0, 2.0]))
    };
    let fit = |lo: usize| {
        lsq(&rs[lo..], &vals[lo..], &basis).ok_or_else(|| {
            Error::GridTooCoarse(format!("{} samples for the growth fit", rs.len() - lo))
        })
    };
    let (full, resid) = fit(0)?;
    let half = rs.len() / 2;
    let drift = match fit(half) {
        Ok((c, _)) => (c[0] - full[0]).abs(),
        Err(_) => 0.0,
    };
    let error_bar = resid + 2.0 * drift;
    if let Some(b) = bound {
        if error_bar > b {
            return Err(Error::PoorFit {
                spread: error_bar,
                bound: b,
            });
        }
    }
    Ok(KappaEstimate {
        value: full[0],
        error_bar,
        rate: (2.0 * q - 2.0).min(1.0),
    })
}

/// `κ = (Δu(0) − I₁(R) − tail)/6` with the tail `∫_R^∞ t u⁻ᑫ dt` modeled by
/// the local power law of `u` at `R`.
pub fn kappa_from_identity(traj: &Trajectory) -> Result<f64> {
    require_global(traj)?;
    let q = traj.params.q;
    let last = traj.last();
    let tail = power_law_tail(last, q, 1)
        .ok_or_else(|| Error::NotGlobal("source tail not integrable at the horizon".into()))?;
    Ok((traj.params.beta - last.source_moment(1) - tail) / 6.0)
}

pub fn gamma_over_6(traj: &Trajectory) -> Result<f64> {
    Ok(gamma_limit(traj)?.corrected / 6.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "q>3/2")]
    Above,
    #[serde(rename = "q=3/2")]
    Critical,
    #[serde(rename = "q<3/2")]
    Below,
}

impl Regime {
    pub fn of(q: f64) -> Self {
        if q > 1.5 {
            Regime::Above
        } else if q == 1.5 {
            Regime::Critical
        } else {
            Regime::Below
        }
    }

    /// Normalization `g(r)` in `(u − κr²)/g(r)`.
    pub fn scale(self, q: f64, r: f64) -> f64 {
        match self {
            Regime::Above => r,
            Regime::Critical => r * r.ln(),
            Regime::Below => r.powf(4.0 - 2.0 * q),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrder {
    pub regime: Regime,
    pub kappa: f64,
    /// Extrapolated limit of `(u − κr²)/g(r)`.
    pub measured: f64,
    /// `(u − κr²)/g(r)` at the last sample, before extrapolation.
    pub raw: f64,
    pub predicted: f64,
    /// For `q > 3/2`: `∫₀^∞ t² u⁻ᑫ dt` without the factor ½.
    pub alternative: Option<f64>,
}

impl SecondOrder {
    pub fn relative_error(&self) -> f64 {
        ((self.measured - self.predicted) / self.predicted).abs()
    }

    pub fn alternative_ratio(&self) -> Option<f64> {
        self.alternative.map(|a| a / self.measured)
    }
}

/// Measured and predicted second-order limits, using `κ` from
/// [`kappa_from_identity`].
pub fn second_order_limit(traj: &Trajectory) -> Result<SecondOrder> {
    let kappa = kappa_from_identity(traj)?;
    second_order_with_kappa(traj, kappa)
}

pub fn second_order_with_kappa(traj: &Trajectory, kappa: f64) -> Result<SecondOrder> {
    require_global(traj)?;
    let q = traj.params.q;
    if !(kappa > 0.0) {
        return Err(Error::KappaZero);
    }
    let growth = kappa_from_growth(traj, None)?;
    if growth.value.abs() <= growth.error_bar {
        return Err(Error::KappaZero);
    }
    let regime = Regime::of(q);
    let window = last_decade(traj);
    let rs: Vec<f64> = window.iter().map(|s| s.r).collect();
    let ratios: Vec<f64> = window
        .iter()
        .map(|s| (s.u - kappa * s.r * s.r) / regime.scale(q, s.r))
        .collect();
    let basis: Vec<Box<dyn Fn(f64) -> f64>> = match regime {
        Regime::Above => power_basis(&decay_exponents(&[2.0 * q - 3.0, 1.0, 4.0 * q - 5.0, 2.0])),
        Regime::Critical => vec![Box::new(|_| 1.0), Box::new(|r: f64| 1.0 / r.ln())],
        Regime::Below => power_basis(&decay_exponents(&[
            3.0 - 2.0 * q,
            2.0 - 2.0 * q,
            4.0 - 2.0 * q,
        ])),
    };
    let (coeffs, _) = lsq(&rs, &ratios, &basis)
        .ok_or_else(|| Error::GridTooCoarse("too few samples for the second-order fit".into()))?;
    let last = traj.last();
    let (predicted, alternative) = match regime {
        Regime::Above => {
            let tail = power_law_tail(last, q, 2)
                .ok_or_else(|| Error::NotGlobal("t² u⁻ᑫ tail not integrable".into()))?;
            let full = last.source_moment(2) + tail;
            (0.5 * full, Some(full))
        }
        Regime::Critical => (1.0 / (2.0 * kappa.powf(1.5)), None),
        Regime::Below => (chi(q, kappa)?, None),
    };
    Ok(SecondOrder {
        regime,
        kappa,
        measured: coeffs[0],
        raw: *ratios.last().unwrap(),
        predicted,
        alternative,
    })
}

/// `χ = (1/(2κᑫ)) (1/(3−2q) − 1/(4−2q) + 1/(3(5−2q)) − 1/(3(2−2q)))`.
pub fn chi(q: f64, kappa: f64) -> Result<f64> {
    if !(q > 1.0 && q < 1.5) {
        return Err(Error::OutOfRegime(q));
    }
    if !(kappa > 0.0) {
        return Err(Error::KappaZero);
    }
    let s = 1.0 / (3.0 - 2.0 * q) - 1.0 / (4.0 - 2.0 * q) + 1.0 / (3.0 * (5.0 - 2.0 * q))
        - 1.0 / (3.0 * (2.0 - 2.0 * q));
    Ok(s / (2.0 * kappa.powf(q)))
}

/// The four integrals in
///
/// ```text
/// u − κr² = (r/2)∫₀ʳ t²u⁻ᑫ − (1/2)∫₀ʳ t³u⁻ᑫ + (1/(6r))∫₀ʳ t⁴u⁻ᑫ + (r²/6)∫ᵣ^∞ t u⁻ᑫ + u(0)
/// ```
///
/// evaluated by double-exponential quadrature for `u = κt²` and divided by
/// `r^{4−2q}`. Their sum is an independent check on [`chi`].
///
/// Each integral is taken in `y = |log(t/r)|`, where the integrand
/// `t^{k+1} u⁻ᑫ` decays exponentially and has no endpoint singularity.
pub fn chi_tail_terms(q: f64, kappa: f64, r: f64) -> Result<[f64; 4]> {
    if !(q > 1.0 && q < 1.5) {
        return Err(Error::OutOfRegime(q));
    }
    if !(kappa > 0.0) {
        return Err(Error::KappaZero);
    }
    let ln_r = r.ln();
    // ∫ tᵏ u⁻ᑫ dt = ∫ exp((k + 1) log t − q log(κ t²)) dy
    let integrand = |k: f64, ln_t: f64| ((k + 1.0) * ln_t - q * (kappa.ln() + 2.0 * ln_t)).exp();
    let moment = |k: f64| {
        let decay = k + 1.0 - 2.0 * q;
        let ymax = 80.0 / decay;
        quadrature::double_exponential::integrate(|y| integrand(k, ln_r - y), 0.0, ymax, 1e-15)
            .integral
    };
    let ymax = 80.0 / (2.0 * q - 2.0);
    let tail =
        quadrature::double_exponential::integrate(|y| integrand(1.0, ln_r + y), 0.0, ymax, 1e-15)
            .integral;
    let g = r.powf(4.0 - 2.0 * q);
    Ok([
        r / 2.0 * moment(2.0) / g,
        -0.5 * moment(3.0) / g,
        moment(4.0) / (6.0 * r) / g,
        r * r / 6.0 * tail / g,
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Decay rate `λ` from `log‖P − p₂‖ ≈ a − λt + b e^{−λt}`; the last term
    /// is the first quadratic correction of the field.
    pub rate: f64,
    /// Negated slope of a plain line fit over the same window.
    pub line_rate: f64,
    pub intercept: f64,
    /// `exp(intercept)`, a proxy for `|c_q|`.
    pub amplitude: f64,
    pub predicted_rate: f64,
    /// Whether the `t e^{−t}` profile was fitted (`q = 3/2`).
    pub log_profile: bool,
    /// RMS residual of the pure exponential fit of `log‖P − p₂‖`.
    pub residual_exponential: f64,
    /// RMS residual of the same fit applied to `log(‖P − p₂‖/t)`.
    pub residual_t_exponential: f64,
    pub window: (f64, f64),
}

fn line_fit(ts: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = ts.iter().zip(ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let rms = (ts
        .iter()
        .zip(ys)
        .map(|(t, y)| (y - intercept - slope * t).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

/// `(λ, a, rms)` minimizing the residual of `y ≈ a − λt + b e^{−λ(t − t_end)}`.
fn corrected_exponential_fit(ts: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let t_end = *ts.last().unwrap();
    let eval = |lambda: f64| {
        let shifted: Vec<f64> = ys.iter().zip(ts).map(|(y, t)| y + lambda * t).collect();
        let b: Vec<Box<dyn Fn(f64) -> f64>> = vec![
            Box::new(|_| 1.0),
            Box::new(move |t: f64| (-lambda * (t - t_end)).exp()),
        ];
        let (c, _) = lsq(ts, &shifted, &b).unwrap_or((vec![f64::NAN, 0.0], f64::NAN));
        let rms = (ts
            .iter()
            .zip(&shifted)
            .map(|(t, y)| (y - c[0] - c[1] * (-lambda * (t - t_end)).exp()).powi(2))
            .sum::<f64>()
            / ts.len() as f64)
            .sqrt();
        (rms, c[0])
    };
    let mut best = (f64::INFINITY, 0.0);
    let mut k = 1;
    while k <= 400 {
        let lambda = 0.01 * k as f64;
        let (rms, _) = eval(lambda);
        if rms < best.0 {
            best = (rms, lambda);
        }
        k += 1;
    }
    // golden-section refinement around the grid minimum
    let (mut lo, mut hi) = (best.1 - 0.01, best.1 + 0.01);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if eval(m1).0 < eval(m2).0 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let (rms, a) = eval(lambda);
    (lambda, a, rms)
}

/// Decay rate of `‖P(t) − p₂‖` over the final `decades` of the path.
///
/// At `q = 3/2` the rate is read from a line fit of `log(‖·‖/t)`; the
/// residuals of both line fits are reported for profile comparison.
pub fn fit_convergence_rate(path: &PhasePath, decades: f64) -> Result<RateFit> {
    let last = path
        .points
        .last()
        .ok_or_else(|| Error::NotConverged("empty phase path".into()))?;
    let dist = last.distance_to(&P2);
    if !(dist < 0.1) {
        return Err(Error::NotConverged(format!(
            "terminal distance to p2 is {dist:e}"
        )));
    }
    let t0 = last.t - decades * std::f64::consts::LN_10;
    let tail = path.tail_from(t0);
    if tail.len() < 4 {
        return Err(Error::NotConverged(
            "fewer than four points in the fit window".into(),
        ));
    }
    let ts: Vec<f64> = tail.iter().map(|p| p.t).collect();
    let logs: Vec<f64> = tail.iter().map(|p| p.distance_to(&P2).ln()).collect();
    let logs_t: Vec<f64> = logs.iter().zip(&ts).map(|(l, t)| l - t.ln()).collect();
    let pure = line_fit(&ts, &logs);
    let weighted = line_fit(&ts, &logs_t);
    let q = path.q;
    let log_profile = q == 1.5;
    let (rate, intercept) = if log_profile {
        (-weighted.0, weighted.1)
    } else {
        let (lambda, a, _) = corrected_exponential_fit(&ts, &logs);
        (lambda, a)
    };
    Ok(RateFit {
        rate,
        line_rate: -pure.0,
        intercept,
        amplitude: intercept.exp(),
        predicted_rate: (2.0 * q - 2.0).min(1.0),
        log_profile,
        residual_exponential: pure.2,
        residual_t_exponential: weighted.2,
        window: (ts[0], *ts.last().unwrap()),
    })
}

/// `v(r) = λ^δ u(λ^α r)` with `λ = ϖ/κ`, which solves the same equation and
/// grows like `ϖ r²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingMap {
    pub q: f64,
    pub source_kappa: f64,
    pub target_kappa: f64,
    pub delta: f64,
    pub alpha: f64,
}

impl ScalingMap {
    pub fn new(q: f64, source_kappa: f64, target_kappa: f64) -> Result<Self> {
        if !(q > 1.0) || !q.is_finite() {
            return Err(Error::DegenerateScaling(q));
        }
        if !(source_kappa > 0.0) {
            return Err(Error::KappaZero);
        }
        if !(target_kappa > 0.0 && target_kappa.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "target growth must be positive (got {target_kappa})"
            )));
        }
        Ok(Self {
            q,
            source_kappa,
            target_kappa,
            delta: -2.0 / (q - 1.0),
            alpha: (q + 1.0) / (2.0 * (q - 1.0)),
        })
    }

    pub fn ratio(&self) -> f64 {
        self.target_kappa / self.source_kappa
    }

    /// `λ^δ`, the factor on values of `u`.
    pub fn value_factor(&self) -> f64 {
        self.ratio().powf(self.delta)
    }

    /// `λ^α`, the factor on the radius.
    pub fn radius_factor(&self) -> f64 {
        self.ratio().powf(self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledProblem {
    pub map: ScalingMap,
    pub params: ProblemParams,
}

/// Initial data of the rescaled solution: `u(0) ↦ λ^δ u(0)` and
/// `Δu(0) ↦ λ^{δ+2α} Δu(0) = λ Δu(0)`.
pub fn scale_to_target(params: &ProblemParams, kappa: f64, target: f64) -> Result<ScaledProblem> {
    let map = ScalingMap::new(params.q, kappa, target)?;
    let mut scaled = *params;
    scaled.u0 = params.u0 * map.value_factor();
    scaled.beta = params.beta * map.ratio();
    scaled.validate()?;
    Ok(ScaledProblem {
        map,
        params: scaled,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessBranch {
    /// `κ₁ = κ₂`: the second solution is used unscaled.
    EqualGrowth,
    /// `κ₁ ≠ κ₂`: the second solution is first rescaled to growth `κ₁`.
    Rescaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub q: f64,
    pub beta: (f64, f64),
    pub target: f64,
    pub kappa: (f64, f64),
    pub branch: WitnessBranch,
    /// Initial data `(u(0), Δu(0))` of the two solutions with growth `ϖ`.
    pub initial: ((f64, f64), (f64, f64)),
    /// Growth of the re-integrated solutions.
    pub growth: (KappaEstimate, KappaEstimate),
    pub initial_separation: f64,
    /// Max of `|v₁ − v₂|` over the shared sample radii.
    pub grid_separation: f64,
}

/// Two different solutions with the same prescribed growth `ϖ`, built from
/// the global solutions at `β₁ ≠ β₂`.
pub fn distinct_pair_witness(
    q: f64,
    beta1: f64,
    beta2: f64,
    target: f64,
    beta_star: f64,
    r_stop: f64,
    controls: &Controls,
) -> Result<WitnessReport> {
    if beta1 == beta2 {
        return Err(Error::InvalidParams(
            "the two shooting parameters must differ".into(),
        ));
    }
    for beta in [beta1, beta2] {
        if !(beta > beta_star) {
            return Err(Error::BelowThreshold { beta, beta_star });
        }
    }
    let run = |p: &ProblemParams| -> Result<Trajectory> {
        let traj = integrate(p, controls)?;
        require_global(&traj)?;
        Ok(traj)
    };
    let p1 = ProblemParams::new(q, beta1)?.with_r_stop(r_stop);
    let p2 = ProblemParams::new(q, beta2)?.with_r_stop(r_stop);
    let kappa1 = kappa_from_identity(&run(&p1)?)?;
    let kappa2 = kappa_from_identity(&run(&p2)?)?;

    let (branch, w2) = if kappa1 == kappa2 {
        (WitnessBranch::EqualGrowth, p2)
    } else {
        (
            WitnessBranch::Rescaled,
            scale_to_target(&p2, kappa2, kappa1)?.params,
        )
    };
    let v1 = scale_to_target(&p1, kappa1, target)?.params;
    let v2 = scale_to_target(&w2, kappa1, target)?.params;
    let t1 = run(&v1)?;
    let t2 = run(&v2)?;
    let growth = (kappa_from_growth(&t1, None)?, kappa_from_growth(&t2, None)?);
    let grid_separation = t1
        .samples
        .iter()
        .filter_map(|a| t2.sample_at(a.r).ok().map(|b| (a.u - b.u).abs()))
        .fold(0.0, f64::max);
    Ok(WitnessReport {
        q,
        beta: (beta1, beta2),
        target,
        kappa: (kappa1, kappa2),
        branch,
        initial: ((v1.u0, v1.beta), (v2.u0, v2.beta)),
        growth,
        initial_separation: (v1.u0 - v2.u0).abs(),
        grid_separation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub kappa_rel: f64,
    pub second_order_rel: f64,
    pub rate_rel: f64,
}

impl Tolerances {
    pub fn for_q(q: f64) -> Self {
        Self {
            kappa_rel: if q >= 2.0 { 1e-4 } else { 1e-3 },
            second_order_rel: if q > 1.5 { 0.01 } else { 0.10 },
            rate_rel: 0.10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportChecks {
    pub kappa_consistent: bool,
    pub second_order: Option<bool>,
    pub rate: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub q: f64,
    pub beta: f64,
    pub r_stop: f64,
    pub kappa_growth: KappaEstimate,
    pub kappa_identity: f64,
    pub gamma_over_6: f64,
    /// Largest pairwise relative difference among the three κ routes.
    pub kappa_spread: f64,
    pub second_order: Option<SecondOrder>,
    pub rate_fit: Option<RateFit>,
    pub tolerances: Tolerances,
    pub checks: ReportChecks,
    pub flags: Vec<String>,
}

pub fn max_relative_spread(values: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            let scale = a.abs().max(b.abs());
            if scale > 0.0 {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    worst
}

/// Every asymptotic check on one global trajectory.
pub fn analyze(traj: &Trajectory) -> Result<AsymptoticsReport> {
    require_global(traj)?;
    let q = traj.params.q;
    let tolerances = Tolerances::for_q(q);
    let kappa_growth = kappa_from_growth(traj, None)?;
    let kappa_identity = kappa_from_identity(traj)?;
    let gamma_over_6 = gamma_over_6(traj)?;
    let kappa_spread = max_relative_spread(&[kappa_growth.value, kappa_identity, gamma_over_6]);
    let mut flags = Vec::new();

    let second_order = match second_order_limit(traj) {
        Ok(s) => Some(s),
        Err(e) => {
            flags.push(format!("second order: {e}"));
            None
        }
    };
    let rate_fit = match phase_trajectory(traj, q).and_then(|p| {
        if !p.skipped.is_empty() {
            flags.push(format!(
                "{} samples with v = 0 left out of the phase path",
                p.skipped.len()
            ));
        }
        fit_convergence_rate(&p, 3.0)
    }) {
        Ok(f) => Some(f),
        Err(e) => {
            flags.push(format!("rate fit: {e}"));
            None
        }
    };
    let checks = ReportChecks {
        kappa_consistent: kappa_spread <= tolerances.kappa_rel,
        second_order: second_order
            .as_ref()
            .map(|s| s.relative_error() <= tolerances.second_order_rel),
        rate: rate_fit.as_ref().map(|f| {
            if f.log_profile {
                f.residual_t_exponential < f.residual_exponential
            } else {
                ((f.rate - f.predicted_rate) / f.predicted_rate).abs() <= tolerances.rate_rel
            }
        }),
    };
    Ok(AsymptoticsReport {
        q,
        beta: traj.params.beta,
        r_stop: traj.last().r,
        kappa_growth,
        kappa_identity,
        gamma_over_6,
        kappa_spread,
        second_order,
        rate_fit,
        tolerances,
        checks,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial_ode::{RadialState, SolutionClass, StepStats};

    fn synthetic(q: f64, beta: f64, f: impl Fn(f64) -> (f64, f64)) -> Trajectory {
        let samples = (0..=200)
            .map(|k| {
                let r = 10f64.powf(k as f64 / 40.0);
                let (u, du) = f(r);
                RadialState {
                    r,
                    u,
                    du,
                    v: 1.0,
                    dv: 0.0,
                    source_moments: [0.0; 4],
                    laplacian_moments: [0.0; 2],
                }
            })
            .collect();
        Trajectory {
            params: ProblemParams::new(q, beta).unwrap().with_r_stop(1e5),
            samples,
            classification: SolutionClass::Global { gamma: 1.0 },
            step_stats: StepStats::default(),
        }
    }

    #[test]
    fn growth_fit_exact_on_polynomial() {
        let traj = synthetic(2.0, 1.0, |r| (3.0 * r * r + 5.0 * r + 1.0, 6.0 * r + 5.0));
        let k = kappa_from_growth(&traj, Some(1e-9)).unwrap();
        assert!((k.value - 3.0).abs() < 1e-12, "{k:?}");
    }

    #[test]
    fn growth_fit_rejects_blow_down_and_poor_fit() {
        let mut traj = synthetic(2.0, 1.0, |r| (r * r, 2.0 * r));
        traj.classification = SolutionClass::BlowDown { r_max: 3.0 };
        assert!(matches!(
            kappa_from_growth(&traj, None),
            Err(Error::NotGlobal(_))
        ));
        let noisy = synthetic(2.0, 1.0, |r| {
            (r * r * (1.0 + 0.01 * (r * 7.0).sin()), 2.0 * r)
        });
        assert!(matches!(
            kappa_from_growth(&noisy, Some(1e-8)),
            Err(Error::PoorFit { .. })
        ));
    }

    #[test]
    fn second_order_exact_on_linear_correction() {
        let sigma = 0.75;
        let kappa = 2.0;
        let traj = synthetic(2.0, 1.0, |r| {
            (kappa * r * r + sigma * r, 2.0 * kappa * r + sigma)
        });
        let s = second_order_with_kappa(&traj, kappa).unwrap();
        assert_eq!(s.regime, Regime::Above);
        assert!((s.measured - sigma).abs() < 1e-10, "{s:?}");
        assert!(matches!(
            second_order_with_kappa(&traj, 0.0),
            Err(Error::KappaZero)
        ));
    }

    #[test]
    fn regime_dispatch_is_exact() {
        assert_eq!(Regime::of(1.5), Regime::Critical);
        assert_eq!(Regime::of(1.5 + 1e-15), Regime::Above);
        assert_eq!(Regime::of(1.5 - 1e-15), Regime::Below);
    }

    #[test]
    fn chi_values() {
        assert!((chi(1.25, 1.0).unwrap() - 16.0 / 15.0).abs() < 1e-15);
        let scaled = 16.0 / 15.0 * 4f64.powf(-1.25);
        assert!((chi(1.25, 4.0).unwrap() - scaled).abs() < 1e-15);
        assert!((scaled - 0.18856).abs() < 1e-5);
        assert!(matches!(chi(1.5, 1.0), Err(Error::OutOfRegime(_))));
        assert!(matches!(chi(1.0, 1.0), Err(Error::OutOfRegime(_))));
        // pole at 3/2
        let near = chi(1.5 - 1e-6, 1.0).unwrap();
        assert!((near * (3.0 - 2.0 * (1.5 - 1e-6)) - 0.5).abs() < 1e-4);
    }

    #[test]
    fn chi_matches_tail_integrals() {
        for (q, kappa) in [(1.25, 1.0), (1.1, 0.3), (1.4, 2.5)] {
            for r in [1.0, 37.0] {
                let terms = chi_tail_terms(q, kappa, r).unwrap();
                let sum: f64 = terms.iter().sum();
                let c = chi(q, kappa).unwrap();
                assert!(((sum - c) / c).abs() < 1e-10, "q={q} {sum} {c}");
            }
        }
    }

    #[test]
    fn scaling_exponents() {
        let m = ScalingMap::new(3.0, 2.0, 2.0).unwrap();
        assert_eq!((m.delta, m.alpha), (-1.0, 1.0));
        assert_eq!(m.value_factor(), 1.0);
        assert_eq!(m.radius_factor(), 1.0);
        for q in [1.1, 1.25, 1.5, 2.0, 7.0] {
            let m = ScalingMap::new(q, 1.0, 3.0).unwrap();
            assert!(((1.0 + q) * m.delta + 4.0 * m.alpha).abs() < 1e-12);
            assert!((m.delta + 2.0 * m.alpha - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            ScalingMap::new(1.0, 1.0, 1.0),
            Err(Error::DegenerateScaling(_))
        ));
    }

    #[test]
    fn scaled_initial_data() {
        let p = ProblemParams::new(2.0, 3.0).unwrap();
        let s = scale_to_target(&p, 0.5, 2.0).unwrap();
        // λ = 4, δ = −2
        assert!((s.params.u0 - 1.0 / 16.0).abs() < 1e-15);
        assert!((s.params.beta - 12.0).abs() < 1e-15);
    }

    #[test]
    fn witness_preconditions() {
        let c = Controls::default();
        assert!(matches!(
            distinct_pair_witness(2.0, 3.0, 3.0, 1.0, 2.0, 1e5, &c),
            Err(Error::InvalidParams(_))
        ));
        assert!(matches!(
            distinct_pair_witness(2.0, 1.0, 3.0, 1.0, 2.0, 1e5, &c),
            Err(Error::BelowThreshold { .. })
        ));
    }

    #[test]
    fn rate_fit_on_synthetic_path() {
        use crate::phase_space::PhasePoint;
        let points = (0..200)
            .map(|k| {
                let t = k as f64 * 0.1;
                let e = 0.3 * (-0.5 * t).exp();
                PhasePoint::new(t, [2.0 + e, 0.0, 6.0, 0.0])
            })
            .collect();
        let path = PhasePath {
            q: 1.25,
            points,
            skipped: vec![],
            consistency_residual: 0.0,
        };
        let f = fit_convergence_rate(&path, 3.0).unwrap();
        assert!((f.line_rate - 0.5).abs() < 1e-12);
        assert!((f.rate - 0.5).abs() < 1e-6, "{f:?}");
        assert!((f.amplitude - 0.3).abs() < 1e-9);
        assert_eq!(f.predicted_rate, 0.5);
        let far = PhasePath {
            q: 2.0,
            points: vec![PhasePoint::new(0.0, [0.0; 4])],
            skipped: vec![],
            consistency_residual: 0.0,
        };
        assert!(matches!(
            fit_convergence_rate(&far, 3.0),
            Err(Error::NotConverged(_))
        ));
    }

    #[test]
    fn relative_spread() {
        assert_eq!(max_relative_spread(&[1.0, 1.0, 1.0]), 0.0);
        assert!((max_relative_spread(&[1.0, 2.0, 1.5]) - 0.5).abs() < 1e-15);
    }
}
