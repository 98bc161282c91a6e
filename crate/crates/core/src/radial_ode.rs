//! Radial initial-value problem for `Δ²u + u⁻ᑫ = 0` in three dimensions.
//!
//! With `v = Δu` the equation splits into `u'' = v − 2u'/r` and
//! `v'' = −u⁻ᑫ − 2v'/r`. The state carries six running integrals alongside
//! `(u, u', v, v')` so that the exact representations
//!
//! ```text
//! v(r) = v(0) − ∫₀ʳ t u⁻ᑫ dt + (1/r) ∫₀ʳ t² u⁻ᑫ dt
//! u(r) = u(0) + ∫₀ʳ t v dt − (1/r) ∫₀ʳ t² v dt
//! ```
//!
//! can be checked at every recorded sample, and so that the moments needed by
//! the asymptotic analysis inherit the integrator's error control.
//!
//! The coordinate singularity at `r = 0` is bridged by a matched Taylor
//! series; from `r_seed` onwards an embedded Dormand–Prince 5(4) pair takes
//! over, with steps capped proportionally to `r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of the packed state vector `[u, u', v, v', I1..I4, J1, J2]`.
pub const DIM: usize = 10;

/// One instance of the initial-value problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    /// Exponent of the nonlinearity, `q > 1`.
    pub q: f64,
    /// `Δu(0)`.
    pub beta: f64,
    /// `u(0)`.
    pub u0: f64,
    /// Radius at which the series start hands over to the integrator.
    pub r_seed: f64,
    /// Integration horizon.
    pub r_stop: f64,
}

impl ProblemParams {
    pub const DEFAULT_R_SEED: f64 = 1e-4;
    pub const DEFAULT_R_STOP: f64 = 1e5;

    /// Normalized problem `u(0) = 1` with default seed radius and horizon.
    pub fn new(q: f64, beta: f64) -> Result<Self> {
        let params = Self {
            q,
            beta,
            u0: 1.0,
            r_seed: Self::DEFAULT_R_SEED,
            r_stop: Self::DEFAULT_R_STOP,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_u0(mut self, u0: f64) -> Self {
        self.u0 = u0;
        self
    }

    pub fn with_r_seed(mut self, r_seed: f64) -> Self {
        self.r_seed = r_seed;
        self
    }

    pub fn with_r_stop(mut self, r_stop: f64) -> Self {
        self.r_stop = r_stop;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q.is_finite() && self.q > 1.0) {
            return Err(Error::InvalidParams(format!(
                "q must exceed 1 (got {})",
                self.q
            )));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidParams(format!(
                "beta must be positive (got {})",
                self.beta
            )));
        }
        if !(self.u0.is_finite() && self.u0 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "u0 must be positive (got {})",
                self.u0
            )));
        }
        if !(self.r_seed.is_finite() && self.r_seed > 0.0) {
            return Err(Error::InvalidParams(format!(
                "r_seed must be positive (got {})",
                self.r_seed
            )));
        }
        if !(self.r_stop.is_finite() && self.r_stop > self.r_seed) {
            return Err(Error::InvalidParams(format!(
                "r_stop must exceed r_seed (got {} <= {})",
                self.r_stop, self.r_seed
            )));
        }
        Ok(())
    }
}

/// Solution state at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialState {
    pub r: f64,
    pub u: f64,
    pub du: f64,
    /// `v = Δu`.
    pub v: f64,
    pub dv: f64,
    /// `∫₀ʳ tᵏ u⁻ᑫ dt` for `k = 1..=4`.
    pub source_moments: [f64; 4],
    /// `∫₀ʳ tᵏ v dt` for `k = 1, 2`.
    pub laplacian_moments: [f64; 2],
}

impl RadialState {
    pub fn to_array(&self) -> [f64; DIM] {
        let [i1, i2, i3, i4] = self.source_moments;
        let [j1, j2] = self.laplacian_moments;
        [self.u, self.du, self.v, self.dv, i1, i2, i3, i4, j1, j2]
    }

    pub fn from_array(r: f64, y: &[f64; DIM]) -> Self {
        Self {
            r,
            u: y[0],
            du: y[1],
            v: y[2],
            dv: y[3],
            source_moments: [y[4], y[5], y[6], y[7]],
            laplacian_moments: [y[8], y[9]],
        }
    }

    /// `∫₀ʳ tᵏ u⁻ᑫ dt`, `k ∈ 1..=4`.
    pub fn source_moment(&self, k: usize) -> f64 {
        self.source_moments[k - 1]
    }

    /// `∫₀ʳ tᵏ v dt`, `k ∈ 1..=2`.
    pub fn laplacian_moment(&self, k: usize) -> f64 {
        self.laplacian_moments[k - 1]
    }

    /// Local growth exponent `r u'/u`.
    pub fn growth_exponent(&self) -> f64 {
        self.r * self.du / self.u
    }
}

fn field(r: f64, y: &[f64; DIM], q: f64) -> Result<[f64; DIM]> {
    let u = y[0];
    if r == 0.0 {
        return Err(Error::ZeroRadius);
    }
    if !(u > 0.0) {
        return Err(Error::NonPositiveU { r, u });
    }
    let (du, v, dv) = (y[1], y[2], y[3]);
    let s = u.powf(-q);
    let r2 = r * r;
    Ok([
        du,
        v - 2.0 * du / r,
        dv,
        -s - 2.0 * dv / r,
        r * s,
        r2 * s,
        r2 * r * s,
        r2 * r2 * s,
        r * v,
        r2 * v,
    ])
}

/// Derivative of the packed state with respect to `r`.
///
/// Ordering matches [`RadialState::to_array`]:
/// `(u', v − 2u'/r, v', −u⁻ᑫ − 2v'/r, r u⁻ᑫ, r² u⁻ᑫ, r³ u⁻ᑫ, r⁴ u⁻ᑫ, r v, r² v)`.
pub fn eval_radial_field(state: &RadialState, q: f64) -> Result<[f64; DIM]> {
    field(state.r, &state.to_array(), q)
}

/// Taylor coefficients of the regular solution about `r = 0`.
#[derive(Debug, Clone, Copy)]
struct SeriesCoefficients {
    u0: f64,
    beta: f64,
    a2: f64,
    a4: f64,
    b2: f64,
    b4: f64,
    /// `u⁻ᑫ ≈ s0 + s2 r²`.
    s0: f64,
    s2: f64,
    /// First neglected coefficients of `u` (r⁶) and `v` (r⁶).
    a6: f64,
    b6: f64,
}

impl SeriesCoefficients {
    fn new(params: &ProblemParams) -> Self {
        let (q, u0, beta) = (params.q, params.u0, params.beta);
        let s0 = u0.powf(-q);
        // Δ(rⁿ) = n(n+1) rⁿ⁻² in three dimensions.
        let a2 = beta / 6.0;
        let b2 = -s0 / 6.0;
        let a4 = b2 / 20.0;
        let s2 = -q * s0 * a2 / u0;
        let b4 = -s2 / 20.0;
        let s4 = s0 * (-q * a4 / u0 + 0.5 * q * (q + 1.0) * (a2 / u0).powi(2));
        let a6 = b4 / 42.0;
        let b6 = -s4 / 42.0;
        Self {
            u0,
            beta,
            a2,
            a4,
            b2,
            b4,
            s0,
            s2,
            a6,
            b6,
        }
    }

    /// Size of the first neglected term, relative to `u(0)` and `Δu(0)`.
    fn truncation_estimate(&self, r: f64) -> f64 {
        let r6 = r.powi(6);
        (self.a6.abs() / self.u0 + self.b6.abs() / self.beta) * r6
    }

    fn state(&self, r: f64) -> RadialState {
        let r2 = r * r;
        let r3 = r2 * r;
        let r4 = r2 * r2;
        let source_moments = [1, 2, 3, 4].map(|k: i32| {
            self.s0 * r.powi(k + 1) / f64::from(k + 1) + self.s2 * r.powi(k + 3) / f64::from(k + 3)
        });
        let laplacian_moments = [
            self.beta * r2 / 2.0 + self.b2 * r4 / 4.0 + self.b4 * r4 * r2 / 6.0,
            self.beta * r3 / 3.0 + self.b2 * r4 * r / 5.0 + self.b4 * r4 * r3 / 7.0,
        ];
        RadialState {
            r,
            u: self.u0 + self.a2 * r2 + self.a4 * r4,
            du: 2.0 * self.a2 * r + 4.0 * self.a4 * r3,
            v: self.beta + self.b2 * r2 + self.b4 * r4,
            dv: 2.0 * self.b2 * r + 4.0 * self.b4 * r3,
            source_moments,
            laplacian_moments,
        }
    }
}

/// Degree-4 Taylor state at `r0`, with moments integrated term by term.
///
/// `tol` bounds the relative size of the first neglected (`r⁶`) term.
pub fn series_start(params: &ProblemParams, r0: f64, tol: f64) -> Result<RadialState> {
    params.validate()?;
    if !(r0 >= 0.0 && r0 <= params.r_seed) {
        return Err(Error::InvalidParams(format!(
            "series radius {r0} must lie in [0, r_seed = {}]",
            params.r_seed
        )));
    }
    let coeffs = SeriesCoefficients::new(params);
    let estimate = coeffs.truncation_estimate(r0);
    if estimate > tol {
        return Err(Error::SeedTooLarge {
            r_seed: r0,
            estimate,
            tol,
        });
    }
    Ok(coeffs.state(r0))
}

/// Error-control and sampling settings for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub rtol: f64,
    pub atol: f64,
    /// Cap on the step as a fraction of the current radius.
    pub max_step_factor: f64,
    /// Geometric sampling density of the stored trajectory.
    pub samples_per_decade: usize,
    /// `u` below this value counts as blow-down.
    pub u_min: f64,
    pub max_steps: usize,
    /// When blow-down is certain at `r_stop`, integration continues up to
    /// `r_stop · extension_limit` to locate it.
    pub extension_limit: f64,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step_factor: 0.1,
            samples_per_decade: 40,
            u_min: 1e-8,
            max_steps: 2_000_000,
            extension_limit: 1e12,
        }
    }
}

impl Controls {
    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn with_samples_per_decade(mut self, n: usize) -> Self {
        self.samples_per_decade = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol.is_finite() && self.atol.is_finite() && self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidParams(format!(
                "tolerances must be positive (rtol = {}, atol = {})",
                self.rtol, self.atol
            )));
        }
        if self.rtol < 100.0 * f64::EPSILON {
            return Err(Error::ToleranceUnreachable(format!(
                "rtol = {:e} is below 100 machine epsilons",
                self.rtol
            )));
        }
        if !(self.max_step_factor > 0.0 && self.max_step_factor <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "max_step_factor must lie in (0, 1] (got {})",
                self.max_step_factor
            )));
        }
        if self.samples_per_decade == 0 {
            return Err(Error::InvalidParams(
                "samples_per_decade must be positive".into(),
            ));
        }
        if !(self.u_min > 0.0) {
            return Err(Error::InvalidParams("u_min must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of an integration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolutionClass {
    /// `u` fell to `u_min` at `r_max`, or the step size collapsed there while
    /// `u` was falling with `v < 0`.
    BlowDown {
        r_max: f64,
    },
    /// Reached the horizon with `v > 0`; `gamma` is the tail-corrected limit of `v`.
    Global {
        gamma: f64,
    },
    Undetermined {
        reason: String,
    },
}

impl SolutionClass {
    pub fn is_global(&self) -> bool {
        matches!(self, SolutionClass::Global { .. })
    }

    pub fn is_blow_down(&self) -> bool {
        matches!(self, SolutionClass::BlowDown { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub min_step: f64,
    pub max_step: f64,
}

/// Sampled solution of one IVP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: ProblemParams,
    pub samples: Vec<RadialState>,
    pub classification: SolutionClass,
    pub step_stats: StepStats,
}

impl Trajectory {
    pub fn last(&self) -> &RadialState {
        self.samples
            .last()
            .expect("trajectory has at least one sample")
    }

    pub fn first(&self) -> &RadialState {
        &self.samples[0]
    }

    pub fn is_global(&self) -> bool {
        self.classification.is_global()
    }

    /// Sample at exactly radius `r`.
    pub fn sample_at(&self, r: f64) -> Result<&RadialState> {
        let idx = self
            .samples
            .binary_search_by(|s| s.r.total_cmp(&r))
            .map_err(|_| Error::SampleNotFound(r))?;
        Ok(&self.samples[idx])
    }

    /// Samples with `r` in `[lo, hi]`.
    pub fn window(&self, lo: f64, hi: f64) -> &[RadialState] {
        let start = self.samples.partition_point(|s| s.r < lo);
        let end = self.samples.partition_point(|s| s.r <= hi);
        &self.samples[start..end.max(start)]
    }
}

/// Modeled tail `∫_R^∞ tᵏ u⁻ᑫ dt` assuming `u(t) ≈ u(R) (t/R)ˣ` beyond `R`,
/// with `x = R u'(R)/u(R)` the local growth exponent.
///
/// Returns `None` when the modeled integrand is not integrable (`q x ≤ k + 1`).
/// For quadratic growth this reduces to `R^{k+1} u(R)⁻ᑫ / (2q − k − 1)`.
pub fn power_law_tail(state: &RadialState, q: f64, k: i32) -> Option<f64> {
    let x = state.growth_exponent();
    let decay = q * x - f64::from(k + 1);
    if !(decay > 0.0) || !state.u.is_finite() || state.u <= 0.0 {
        return None;
    }
    Some(state.r.powi(k + 1) * state.u.powf(-q) / decay)
}

/// `v(R) − (1/R) ∫₀ᴿ t² u⁻ᑫ dt − ∫_R^∞ t u⁻ᑫ dt`, the limit of `v` predicted
/// from the state at `R` (exact up to the tail model).
pub fn tail_corrected_gamma(state: &RadialState, q: f64) -> Option<f64> {
    let tail = power_law_tail(state, q, 1)?;
    Some(state.v - state.source_moment(2) / state.r - tail)
}

/// Residuals `(res_u, res_v)` of the two exact representations at one state.
pub fn representation_residuals(params: &ProblemParams, s: &RadialState) -> (f64, f64) {
    let res_v = s.v - (params.beta - s.source_moment(1) + s.source_moment(2) / s.r);
    let res_u = s.u - (params.u0 + s.laplacian_moment(1) - s.laplacian_moment(2) / s.r);
    (res_u, res_v)
}

/// Representation residuals at a sample radius of `traj`.
pub fn representation_residual(traj: &Trajectory, r: f64) -> Result<(f64, f64)> {
    let s = traj.sample_at(r)?;
    Ok(representation_residuals(&traj.params, s))
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct StepOutcome {
    y: [f64; DIM],
    /// Derivative at the new point (first stage of the next step).
    f_new: [f64; DIM],
    /// Scaled max-norm error estimate; accept when ≤ 1.
    err: f64,
}

fn dp_step(
    r: f64,
    y: &[f64; DIM],
    f0: &[f64; DIM],
    h: f64,
    q: f64,
    ctl: &Controls,
) -> Result<StepOutcome> {
    let mut k = [[0.0; DIM]; 7];
    k[0] = *f0;
    let mut y_stage = [0.0; DIM];
    for s in 1..7 {
        for i in 0..DIM {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(s) {
                acc += A[s][j] * kj[i];
            }
            y_stage[i] = y[i] + h * acc;
        }
        k[s] = field(r + C[s] * h, &y_stage, q)?;
    }
    // The seventh stage point is the fifth-order solution (FSAL).
    let y_new = y_stage;
    let mut err: f64 = 0.0;
    for i in 0..DIM {
        let mut e = 0.0;
        for (s, ks) in k.iter().enumerate() {
            e += E[s] * ks[i];
        }
        let scale = ctl.atol + ctl.rtol * y[i].abs().max(y_new[i].abs());
        err = err.max((h * e).abs() / scale);
    }
    if !err.is_finite() {
        err = f64::INFINITY;
    }
    Ok(StepOutcome {
        y: y_new,
        f_new: k[6],
        err,
    })
}

fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}

/// Integrate from the series start at `params.r_seed`.
pub fn integrate(params: &ProblemParams, controls: &Controls) -> Result<Trajectory> {
    controls.validate()?;
    let seed = series_start(params, params.r_seed, 1e-2 * controls.rtol)?;
    integrate_from(params, seed, controls)
}

/// Integrate from an explicit seed state (its radius replaces `params.r_seed`).
///
/// Samples are stored on the grid `r_seed · 10^(n / samples_per_decade)` plus
/// `r_stop` and any blow-down point; every stored sample is an accepted step
/// endpoint, never an interpolant.
pub fn integrate_from(
    params: &ProblemParams,
    seed: RadialState,
    controls: &Controls,
) -> Result<Trajectory> {
    params.validate()?;
    controls.validate()?;
    let q = params.q;
    let r_seed = seed.r;
    if !(r_seed > 0.0 && r_seed < params.r_stop) {
        return Err(Error::InvalidParams(format!(
            "seed radius {r_seed} must lie in (0, r_stop)"
        )));
    }
    let params = ProblemParams { r_seed, ..*params };
    let grid_ratio = 10f64.powf(1.0 / controls.samples_per_decade as f64);
    let grid_point = |n: u64| r_seed * grid_ratio.powf(n as f64);

    let mut r = r_seed;
    let mut y = seed.to_array();
    let mut f = field(r, &y, q)?;
    let mut samples = vec![seed];
    let mut stats = StepStats {
        min_step: f64::INFINITY,
        ..StepStats::default()
    };
    let mut next_grid: u64 = 1;
    let mut h = 0.01 * r_seed;
    let mut extending = false;
    let extension_stop = params.r_stop * controls.extension_limit;

    let classification = loop {
        if stats.accepted + stats.rejected >= controls.max_steps {
            return Err(Error::MaxIterations(controls.max_steps));
        }
        let stop = if extending {
            extension_stop
        } else {
            params.r_stop
        };
        let grid = grid_point(next_grid);
        // Grid points within rounding of the horizon collapse onto it.
        let landing = if grid >= stop * (1.0 - 1e-9) {
            stop
        } else {
            grid
        };
        let mut h_try = h.min(controls.max_step_factor * r);
        let lands = h_try >= (landing - r) * (1.0 - 1e-12);
        if lands {
            h_try = landing - r;
        }
        if h_try < 1e-14 * r {
            if y[1] < 0.0 && y[2] < 0.0 {
                // Collapse steeper than double precision resolves: u ~ (R − r)^{4/(q+1)}
                // never reaches u_min for large q, and the step size itself locates R.
                if samples.last().is_some_and(|s| s.r < r) {
                    samples.push(RadialState::from_array(r, &y));
                }
                break SolutionClass::BlowDown { r_max: r };
            }
            return Err(Error::StepUnderflow {
                r,
                h: h_try,
                u: y[0],
                v: y[2],
            });
        }

        let outcome = match dp_step(r, &y, &f, h_try, q, controls) {
            Ok(o) if o.err <= 1.0 => o,
            Ok(o) => {
                stats.rejected += 1;
                h = h_try * step_factor(o.err).min(0.9);
                continue;
            }
            Err(Error::NonPositiveU { .. }) => {
                stats.rejected += 1;
                h = 0.25 * h_try;
                continue;
            }
            Err(e) => return Err(e),
        };

        stats.accepted += 1;
        stats.min_step = stats.min_step.min(h_try);
        stats.max_step = stats.max_step.max(h_try);

        if outcome.y[0] < controls.u_min {
            let (h_event, y_event) = locate_blow_down(r, &y, &f, h_try, q, controls);
            let r_event = r + h_event;
            samples.push(RadialState::from_array(r_event, &y_event));
            break SolutionClass::BlowDown { r_max: r_event };
        }

        let r_new = if lands { landing } else { r + h_try };
        r = r_new;
        y = outcome.y;
        f = outcome.f_new;
        h = h_try * step_factor(outcome.err);

        if lands {
            samples.push(RadialState::from_array(r, &y));
            while grid_point(next_grid) <= r * (1.0 + 1e-9) {
                next_grid += 1;
            }
        }

        if lands && landing == stop {
            if extending {
                break SolutionClass::Undetermined {
                    reason: format!("blow-down certain but not reached by r = {stop:e}"),
                };
            }
            let state = RadialState::from_array(r, &y);
            let gamma_upper = params.beta - state.source_moment(1);
            if state.v <= 0.0 || gamma_upper < 0.0 {
                // v decreases towards a limit bounded by gamma_upper < 0, so u
                // collapses at a finite radius.
                extending = true;
                continue;
            }
            break match tail_corrected_gamma(&state, q) {
                Some(gamma) if gamma >= 0.0 => SolutionClass::Global { gamma },
                Some(gamma) => SolutionClass::Undetermined {
                    reason: format!(
                        "tail-corrected gamma {gamma:e} is negative while v(r_stop) = {:e} > 0",
                        state.v
                    ),
                },
                None => SolutionClass::Undetermined {
                    reason: "tail beyond r_stop not integrable under the local power model".into(),
                },
            };
        }
    };

    if stats.accepted == 0 {
        stats.min_step = 0.0;
    }
    Ok(Trajectory {
        params,
        samples,
        classification,
        step_stats: stats,
    })
}

/// Bisect on the step length for the point where `u` crosses `u_min`.
fn locate_blow_down(
    r: f64,
    y: &[f64; DIM],
    f: &[f64; DIM],
    h: f64,
    q: f64,
    ctl: &Controls,
) -> (f64, [f64; DIM]) {
    let above = |h_trial: f64| -> Option<[f64; DIM]> {
        match dp_step(r, y, f, h_trial, q, ctl) {
            Ok(o) if o.y[0] >= ctl.u_min => Some(o.y),
            _ => None,
        }
    };
    let (mut lo, mut hi) = (0.0, h);
    let mut y_lo = *y;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match above(mid) {
            Some(y_mid) => {
                lo = mid;
                y_lo = y_mid;
            }
            None => hi = mid,
        }
    }
    if lo == 0.0 {
        // Degenerate bracket; report the crossing at the far end.
        return (hi, y_lo);
    }
    (lo, y_lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_direct_substitution() {
        let state = RadialState {
            r: 1.0,
            u: 1.0,
            du: 0.0,
            v: 2.0,
            dv: 0.0,
            source_moments: [0.0; 4],
            laplacian_moments: [0.0; 2],
        };
        let d = eval_radial_field(&state, 2.0).unwrap();
        assert_eq!(&d[..4], &[0.0, 2.0, 0.0, -1.0]);
        for beta in [0.3, 1.7, 9.0] {
            for q in [1.1, 3.0, 7.0] {
                let s = RadialState { v: beta, ..state };
                let d = eval_radial_field(&s, q).unwrap();
                assert_eq!(&d[..4], &[0.0, beta, 0.0, -1.0]);
                assert_eq!(&d[4..8], &[1.0; 4]);
                assert_eq!(&d[8..], &[beta, beta]);
            }
        }
    }

    #[test]
    fn field_errors() {
        let state = RadialState {
            r: 1.0,
            u: 0.0,
            du: 0.0,
            v: 1.0,
            dv: 0.0,
            source_moments: [0.0; 4],
            laplacian_moments: [0.0; 2],
        };
        assert!(matches!(
            eval_radial_field(&state, 2.0),
            Err(Error::NonPositiveU { .. })
        ));
        let state = RadialState {
            r: 0.0,
            u: 1.0,
            ..state
        };
        assert_eq!(eval_radial_field(&state, 2.0), Err(Error::ZeroRadius));
    }

    #[test]
    fn params_validation() {
        assert!(ProblemParams::new(1.0, 1.0).is_err());
        assert!(ProblemParams::new(0.9, 1.0).is_err());
        assert!(ProblemParams::new(2.0, 0.0).is_err());
        assert!(ProblemParams::new(2.0, -1.0).is_err());
        assert!(ProblemParams::new(2.0, f64::NAN).is_err());
        let p = ProblemParams::new(2.0, 1.0).unwrap();
        assert!(p.with_u0(0.0).validate().is_err());
        assert!(p.with_r_stop(1e-5).validate().is_err());
        assert!(p.with_r_seed(0.0).validate().is_err());
    }

    #[test]
    fn series_limit_at_origin() {
        let p = ProblemParams::new(2.0, 1.3).unwrap();
        let s = series_start(&p, 0.0, 1e-14).unwrap();
        assert_eq!((s.u, s.du, s.v, s.dv), (1.0, 0.0, 1.3, 0.0));
        assert_eq!(s.source_moments, [0.0; 4]);
        assert_eq!(s.laplacian_moments, [0.0; 2]);
    }

    #[test]
    fn series_value_small_radius() {
        let p = ProblemParams::new(2.0, 1.0).unwrap().with_r_seed(1e-3);
        let s = series_start(&p, 1e-3, 1e-14).unwrap();
        let leading = 1.0 + 1e-6 / 6.0;
        assert!((s.u - leading).abs() < 1e-14);
    }

    #[test]
    fn series_coefficients_unit_normalization() {
        // u = 1 + (β/6) r² − r⁴/120, v = β − r²/6 + (qβ/120) r⁴.
        let (q, beta) = (3.0, 0.7);
        let p = ProblemParams::new(q, beta).unwrap();
        let c = SeriesCoefficients::new(&p);
        assert!((c.a2 - beta / 6.0).abs() < 1e-16);
        assert!((c.a4 + 1.0 / 120.0).abs() < 1e-16);
        assert!((c.b2 + 1.0 / 6.0).abs() < 1e-16);
        assert!((c.b4 - q * beta / 120.0).abs() < 1e-16);
    }

    #[test]
    fn series_residual_polynomial() {
        // Residual of u'' + (2/r) u' − v, coefficient by coefficient: the
        // series for u is degree 4 and v degree 4, so only r⁴ may survive.
        let p = ProblemParams::new(2.5, 1.9).unwrap().with_u0(1.4);
        let c = SeriesCoefficients::new(&p);
        // Δ(a0 + a2 r² + a4 r⁴) = 6 a2 + 20 a4 r².
        let r0_coeff = 6.0 * c.a2 - c.beta;
        let r2_coeff = 20.0 * c.a4 - c.b2;
        let r4_coeff = -c.b4;
        assert!(r0_coeff.abs() < 1e-15);
        assert!(r2_coeff.abs() < 1e-15);
        assert!(r4_coeff.abs() > 0.0);
        // Δv + u⁻ᑫ to second order.
        let r0v = 6.0 * c.b2 + c.s0;
        let r2v = 20.0 * c.b4 + c.s2;
        assert!(r0v.abs() < 1e-15 && r2v.abs() < 1e-15);
    }

    #[test]
    fn series_seed_too_large() {
        let p = ProblemParams::new(2.0, 1.0).unwrap().with_r_seed(0.5);
        assert!(matches!(
            series_start(&p, 0.5, 1e-12),
            Err(Error::SeedTooLarge { .. })
        ));
        assert!(series_start(&p, 0.6, 1.0).is_err());
    }

    #[test]
    fn residual_at_seed_is_tiny() {
        let p = ProblemParams::new(2.0, 2.0).unwrap();
        let s = series_start(&p, p.r_seed, 1e-14).unwrap();
        let (ru, rv) = representation_residuals(&p, &s);
        // O(r_seed⁶) truncation is far below rounding of u ≈ 1.
        assert!(ru.abs() <= 4.0 * f64::EPSILON, "{ru}");
        assert!(rv.abs() <= 4.0 * f64::EPSILON, "{rv}");
    }

    #[test]
    fn corrupted_moment_shifts_residual() {
        let p = ProblemParams::new(2.0, 1.0).unwrap().with_r_stop(10.0);
        let traj = integrate(&p, &Controls::default()).unwrap();
        let mut bad = traj.clone();
        let idx = bad.samples.len() / 2;
        bad.samples[idx].source_moments[1] += 1.0;
        let r = bad.samples[idx].r;
        let (_, good) = representation_residual(&traj, r).unwrap();
        let (_, shifted) = representation_residual(&bad, r).unwrap();
        assert!((shifted - good + 1.0 / r).abs() < 1e-12);
        assert!(representation_residual(&traj, 0.123_456).is_err());
    }

    #[test]
    fn large_beta_is_global() {
        let p = ProblemParams::new(2.0, 10.0).unwrap();
        let traj = integrate(&p, &Controls::default()).unwrap();
        match traj.classification {
            SolutionClass::Global { gamma } => assert!(gamma > 0.0),
            ref other => panic!("expected global, got {other:?}"),
        }
        assert_eq!(traj.last().r, p.r_stop);
        assert_eq!(traj.first().r, p.r_seed);
    }

    #[test]
    fn tiny_beta_blows_down() {
        let p = ProblemParams::new(2.0, 1e-4).unwrap();
        let traj = integrate(&p, &Controls::default()).unwrap();
        match traj.classification {
            SolutionClass::BlowDown { r_max } => {
                assert!(r_max.is_finite() && r_max > p.r_seed);
                assert_eq!(traj.last().r, r_max);
                assert!(traj.last().u >= 1e-8 && traj.last().u < 1e-6);
            }
            ref other => panic!("expected blow-down, got {other:?}"),
        }
    }

    #[test]
    fn samples_strictly_increasing_and_deterministic() {
        let p = ProblemParams::new(1.5, 3.0).unwrap().with_r_stop(1e3);
        let a = integrate(&p, &Controls::default()).unwrap();
        let b = integrate(&p, &Controls::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.samples.windows(2).all(|w| w[0].r < w[1].r));
    }

    #[test]
    fn tail_model_quadratic_limit() {
        let s = RadialState {
            r: 10.0,
            u: 200.0,
            du: 40.0,
            v: 12.0,
            dv: 0.0,
            source_moments: [0.0; 4],
            laplacian_moments: [0.0; 2],
        };
        let q = 2.0;
        let t = power_law_tail(&s, q, 1).unwrap();
        assert!((t - 100.0 * 200f64.powf(-q) / (2.0 * q - 2.0)).abs() < 1e-18);
        assert!(power_law_tail(&s, 1.2, 3).is_none());
    }
}
