//! Logarithmic phase space of the radial system.
//!
//! With `t = log r` the variables
//!
//! ```text
//! x = r u'/u,   y = r v'/v,   z = r² v/u,   w = r² u⁻ᑫ/v
//! ```
//!
//! turn the radial equations into the autonomous quadratic field
//!
//! ```text
//! x' = x(−1 − x) + z
//! y' = y(−1 − y) − w
//! z' = z(2 − x + y)
//! w' = w(2 − q x − y)
//! ```
//!
//! Quadratic growth `u ~ κ r²` corresponds to convergence to `p₂ = (2, 0, 6, 0)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;
use crate::radial_ode::{RadialState, Trajectory};

pub type Mat4 = [[f64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl PhasePoint {
    pub fn new(t: f64, [x, y, z, w]: [f64; 4]) -> Self {
        Self { t, x, y, z, w }
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }

    /// Euclidean distance to `p` in `(x, y, z, w)`.
    pub fn distance_to(&self, p: &[f64; 4]) -> f64 {
        self.coords()
            .iter()
            .zip(p)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Map a radial state into phase coordinates.
pub fn to_phase(state: &RadialState, q: f64) -> Result<PhasePoint> {
    let RadialState {
        r, u, du, v, dv, ..
    } = *state;
    if !(r > 0.0) {
        return Err(Error::DegenerateState {
            r,
            reason: "phase variables need r > 0".into(),
        });
    }
    if !(u > 0.0) {
        return Err(Error::DegenerateState {
            r,
            reason: format!("u = {u:e} is not positive"),
        });
    }
    if v == 0.0 {
        return Err(Error::DegenerateState {
            r,
            reason: "v = 0 leaves y and w undefined".into(),
        });
    }
    let r2 = r * r;
    Ok(PhasePoint {
        t: r.ln(),
        x: r * du / u,
        y: r * dv / v,
        z: r2 * v / u,
        w: r2 * u.powf(-q) / v,
    })
}

/// `(r, u, u', v, v')` recovered from a phase point.
///
/// `z w = r⁴ u^{−(q+1)}` fixes `u`; the other three follow directly.
pub fn from_phase(p: &PhasePoint, q: f64) -> Result<(f64, f64, f64, f64, f64)> {
    let r = p.t.exp();
    let zw = p.z * p.w;
    if !(zw > 0.0) {
        return Err(Error::DegenerateState {
            r,
            reason: format!("z w = {zw:e} must be positive to recover u"),
        });
    }
    let u = (r.powi(4) / zw).powf(1.0 / (q + 1.0));
    let v = p.z * u / (r * r);
    Ok((r, u, p.x * u / r, v, p.y * v / r))
}

pub fn phase_field(p: &[f64; 4], q: f64) -> [f64; 4] {
    let [x, y, z, w] = *p;
    [
        x * (-1.0 - x) + z,
        y * (-1.0 - y) - w,
        z * (2.0 - x + y),
        w * (2.0 - q * x - y),
    ]
}

/// The nine equilibria `p₀ … p₈` of [`phase_field`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointSet {
    pub q: f64,
    /// `4/(q + 1)`.
    pub a: f64,
    pub points: Vec<(String, [f64; 4])>,
}

impl CriticalPointSet {
    pub fn get(&self, name: &str) -> Option<[f64; 4]> {
        self.points.iter().find(|(n, _)| n == name).map(|(_, p)| *p)
    }
}

pub const P2: [f64; 4] = [2.0, 0.0, 6.0, 0.0];
pub const P1: [f64; 4] = [1.0, -1.0, 2.0, 0.0];

pub fn fixed_points(q: f64) -> Result<CriticalPointSet> {
    if !(q.is_finite() && q > 1.0) {
        return Err(Error::InvalidParams(format!("q must exceed 1 (got {q})")));
    }
    let a = 4.0 / (q + 1.0);
    let points = [
        [0.0, 0.0, 0.0, 0.0],
        P1,
        P2,
        [a, a - 2.0, a * (a + 1.0), (2.0 - a) * (a - 1.0)],
        [0.0, 2.0, 0.0, -6.0],
        [0.0, -1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0],
        [-1.0, -1.0, 0.0, 0.0],
        [-1.0, q + 2.0, 0.0, -(q + 2.0) * (q + 3.0)],
    ];
    Ok(CriticalPointSet {
        q,
        a,
        points: points
            .iter()
            .enumerate()
            .map(|(i, p)| (format!("p{i}"), *p))
            .collect(),
    })
}

/// Derivative of [`phase_field`].
pub fn jacobian(p: &[f64; 4], q: f64) -> Mat4 {
    let [x, y, z, w] = *p;
    [
        [-2.0 * x - 1.0, 0.0, 1.0, 0.0],
        [0.0, -2.0 * y - 1.0, 0.0, -1.0],
        [-z, z, 2.0 - x + y, 0.0],
        [-q * w, -w, 0.0, 2.0 - q * x - y],
    ]
}

/// Eigenvalues of a real 4×4 matrix, sorted by real then imaginary part.
///
/// Characteristic polynomial by Faddeev–LeVerrier, roots by Durand–Kerner
/// with a Newton polish (see [`poly::roots`]).
pub fn eigenvalues(m: &Mat4) -> Result<[Complex64; 4]> {
    let rows: Vec<Vec<f64>> = m.iter().map(|r| r.to_vec()).collect();
    let coeffs = poly::characteristic_polynomial(&rows);
    let roots = poly::roots(&coeffs)?;
    let mut out = [Complex64::new(0.0, 0.0); 4];
    out.copy_from_slice(&roots);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizationReport {
    pub name: String,
    pub point: [f64; 4],
    pub jacobian: Mat4,
    /// `[re, im]` pairs.
    pub eigenvalues: Vec<[f64; 2]>,
}

pub fn linearize(name: &str, point: &[f64; 4], q: f64) -> Result<LinearizationReport> {
    let jac = jacobian(point, q);
    let eig = eigenvalues(&jac)?;
    Ok(LinearizationReport {
        name: name.to_string(),
        point: *point,
        jacobian: jac,
        eigenvalues: eig.iter().map(|c| [c.re, c.im]).collect(),
    })
}

/// Linearization at every critical point for exponent `q`.
pub fn fixed_point_report(q: f64) -> Result<Vec<LinearizationReport>> {
    let set = fixed_points(q)?;
    set.points
        .iter()
        .map(|(name, p)| linearize(name, p, q))
        .collect()
}

/// Greedy multiset match of `got` against `want`; returns the worst distance,
/// or `None` if the sizes differ.
pub fn multiset_distance(got: &[Complex64], want: &[Complex64]) -> Option<f64> {
    if got.len() != want.len() {
        return None;
    }
    let mut used = vec![false; want.len()];
    let mut worst: f64 = 0.0;
    for g in got {
        let (idx, d) = want
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, w)| (i, (g - w).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        used[idx] = true;
        worst = worst.max(d);
    }
    Some(worst)
}

/// A trajectory mapped into phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePath {
    pub q: f64,
    pub points: Vec<PhasePoint>,
    /// Radii of samples that could not be mapped (`v = 0`).
    pub skipped: Vec<f64>,
    /// Max over interior points of `|d(x,y,z,w)/dt − field|`, with the
    /// derivative taken by three-point differences in `t`.
    pub consistency_residual: f64,
}

impl PhasePath {
    /// Points with `t ≥ t0`.
    pub fn tail_from(&self, t0: f64) -> &[PhasePoint] {
        let start = self.points.partition_point(|p| p.t < t0);
        &self.points[start..]
    }
}

fn max_field_mismatch(points: &[PhasePoint], q: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for win in points.windows(3) {
        let (a, b, c) = (&win[0], &win[1], &win[2]);
        let h0 = b.t - a.t;
        let h1 = c.t - b.t;
        if !(h0 > 0.0 && h1 > 0.0) {
            continue;
        }
        let f = phase_field(&b.coords(), q);
        let (pa, pb, pc) = (a.coords(), b.coords(), c.coords());
        for i in 0..4 {
            let d = (h0 * h0 * pc[i] + (h1 * h1 - h0 * h0) * pb[i] - h1 * h1 * pa[i])
                / (h0 * h1 * (h0 + h1));
            worst = worst.max((d - f[i]).abs());
        }
    }
    worst
}

pub fn phase_trajectory(traj: &Trajectory, q: f64) -> Result<PhasePath> {
    let mut points = Vec::with_capacity(traj.samples.len());
    let mut skipped = Vec::new();
    for s in &traj.samples {
        match to_phase(s, q) {
            Ok(p) => points.push(p),
            Err(Error::DegenerateState { r, .. }) => skipped.push(r),
            Err(e) => return Err(e),
        }
    }
    let consistency_residual = max_field_mismatch(&points, q);
    Ok(PhasePath {
        q,
        points,
        skipped,
        consistency_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{exact_entire_q7, ExactSolution};

    fn state_from(r: f64, e: crate::oracles::ExactValues) -> RadialState {
        RadialState {
            r,
            u: e.u,
            du: e.du,
            v: e.v,
            dv: e.dv,
            source_moments: [0.0; 4],
            laplacian_moments: [0.0; 2],
        }
    }

    #[test]
    fn field_vanishes_at_listed_points() {
        for q in [1.1, 1.25, 1.5, 2.0, 3.0, 7.0, 10.0] {
            let set = fixed_points(q).unwrap();
            assert_eq!(set.points.len(), 9);
            for (name, p) in &set.points {
                let f = phase_field(p, q);
                let norm = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                assert!(norm < 1e-12, "q={q} {name} {f:?}");
            }
        }
        assert_eq!(phase_field(&[0.0; 4], 3.0), [0.0; 4]);
    }

    #[test]
    fn listed_point_values() {
        let set = fixed_points(7.0).unwrap();
        assert_eq!(set.get("p3").unwrap(), [0.5, -1.5, 0.75, -0.75]);
        assert_eq!(set.get("p4").unwrap(), [0.0, 2.0, 0.0, -6.0]);
        assert_eq!(set.get("p8").unwrap(), [-1.0, 9.0, 0.0, -90.0]);
        assert!(fixed_points(1.0).is_err());
    }

    #[test]
    fn jacobian_at_p2_and_origin() {
        for q in [1.5, 2.0, 7.0] {
            assert_eq!(
                jacobian(&P2, q),
                [
                    [-5.0, 0.0, 1.0, 0.0],
                    [0.0, -1.0, 0.0, -1.0],
                    [-6.0, 6.0, 0.0, 0.0],
                    [0.0, 0.0, 0.0, 2.0 - 2.0 * q],
                ]
            );
        }
        assert_eq!(
            jacobian(&[0.0; 4], 3.0),
            [
                [-1.0, 0.0, 1.0, 0.0],
                [0.0, -1.0, 0.0, -1.0],
                [0.0, 0.0, 2.0, 0.0],
                [0.0, 0.0, 0.0, 2.0],
            ]
        );
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let eps = 1e-6;
        let q = 2.7;
        let p = [0.3, -1.2, 2.5, 0.8];
        let jac = jacobian(&p, q);
        for j in 0..4 {
            let (mut plus, mut minus) = (p, p);
            plus[j] += eps;
            minus[j] -= eps;
            let (fp, fm) = (phase_field(&plus, q), phase_field(&minus, q));
            for i in 0..4 {
                let fd = (fp[i] - fm[i]) / (2.0 * eps);
                assert!((fd - jac[i][j]).abs() < 1e-8, "({i},{j})");
            }
        }
    }

    fn reals(v: &[f64]) -> Vec<Complex64> {
        v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    #[test]
    fn spectrum_at_p2() {
        let e = eigenvalues(&jacobian(&P2, 7.0)).unwrap();
        assert!(multiset_distance(&e, &reals(&[-12.0, -3.0, -2.0, -1.0])).unwrap() < 1e-9);
        let e = eigenvalues(&jacobian(&P2, 2.0)).unwrap();
        assert!(multiset_distance(&e, &reals(&[-3.0, -2.0, -2.0, -1.0])).unwrap() < 1e-9);
        let id = [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let e = eigenvalues(&id).unwrap();
        assert!(multiset_distance(&e, &reals(&[1.0; 4])).unwrap() < 1e-9);
    }

    #[test]
    fn spectrum_sorted_and_trace_consistent() {
        let m = jacobian(&[0.4, -0.3, 1.7, 2.2], 3.3);
        let e = eigenvalues(&m).unwrap();
        let trace: f64 = (0..4).map(|i| m[i][i]).sum();
        let sum: f64 = e.iter().map(|c| c.re).sum();
        assert!((trace - sum).abs() < 1e-10);
        assert!(e.windows(2).all(|w| w[0].re <= w[1].re));
    }

    #[test]
    fn singular_power_maps_to_p3() {
        let q = 2.0;
        let sol = ExactSolution::singular_power(q).unwrap();
        let p3 = fixed_points(q).unwrap().get("p3").unwrap();
        let expected = [4.0 / 3.0, -2.0 / 3.0, 28.0 / 9.0, 2.0 / 9.0];
        for (a, b) in p3.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
        for r in [1e-3, 0.5, 1.0, 40.0, 1e4] {
            let p = to_phase(&state_from(r, sol.eval(r)), q).unwrap();
            assert!(p.distance_to(&p3) < 1e-12, "r={r} {p:?}");
        }
    }

    #[test]
    fn linear_growth_oracle_tends_to_p1() {
        let far = to_phase(&state_from(1e7, exact_entire_q7(1e7, false)), 7.0).unwrap();
        assert!(far.distance_to(&P1) < 1e-6, "{far:?}");
    }

    #[test]
    fn inverse_reconstruction() {
        let sol = ExactSolution::entire_q7(true);
        for r in [0.1, 2.0, 300.0] {
            let e = sol.eval(r);
            let p = to_phase(&state_from(r, e), 7.0).unwrap();
            let (rr, u, du, v, dv) = from_phase(&p, 7.0).unwrap();
            for (a, b) in [(rr, r), (u, e.u), (du, e.du), (v, e.v), (dv, e.dv)] {
                assert!(((a - b) / b).abs() < 1e-12, "{a} {b}");
            }
        }
    }

    #[test]
    fn degenerate_state() {
        let s = RadialState {
            r: 1.0,
            u: 1.0,
            du: 0.1,
            v: 0.0,
            dv: -1.0,
            source_moments: [0.0; 4],
            laplacian_moments: [0.0; 2],
        };
        assert!(matches!(
            to_phase(&s, 2.0),
            Err(Error::DegenerateState { .. })
        ));
    }

    #[test]
    fn multiset_matching() {
        let a = reals(&[1.0, 2.0, 2.0]);
        assert_eq!(multiset_distance(&a, &reals(&[2.0, 1.0, 2.0])), Some(0.0));
        assert!(multiset_distance(&a, &reals(&[1.0, 1.0, 2.0])).unwrap() > 0.5);
        assert_eq!(multiset_distance(&a, &reals(&[1.0])), None);
    }

    #[test]
    fn spectrum_at_p2_over_q_grid() {
        for q in [1.1, 1.25, 1.5, 2.0, 2.5, 3.0, 7.0, 10.0] {
            let e = eigenvalues(&jacobian(&P2, q)).unwrap();
            let want = reals(&[-1.0, -2.0, -3.0, 2.0 - 2.0 * q]);
            assert!(multiset_distance(&e, &want).unwrap() < 1e-9, "q={q} {e:?}");
        }
    }

    #[test]
    fn phase_path_of_exact_solution() {
        use crate::radial_ode::{ProblemParams, SolutionClass, StepStats};
        let sol = ExactSolution::entire_q7(true);
        let path_for = |per_decade: usize| {
            let n = 4 * per_decade;
            let samples = (0..=n)
                .map(|k| {
                    let r = 10f64.powf(-1.0 + k as f64 / per_decade as f64);
                    state_from(r, sol.eval(r))
                })
                .collect();
            let traj = Trajectory {
                params: ProblemParams::new(7.0, 1.0).unwrap(),
                samples,
                classification: SolutionClass::Undetermined {
                    reason: String::new(),
                },
                step_stats: StepStats::default(),
            };
            phase_trajectory(&traj, 7.0).unwrap()
        };
        let coarse = path_for(20).consistency_residual;
        let fine = path_for(40).consistency_residual;
        let ratio = coarse / fine;
        assert!(ratio > 3.5 && ratio < 4.5, "{coarse} {fine}");
        assert!(path_for(40).skipped.is_empty());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn jacobian_agrees_with_differences(
                p in prop::array::uniform4(-3.0f64..3.0),
                q in 1.05f64..10.0,
            ) {
                let eps = 1e-5;
                let jac = jacobian(&p, q);
                for j in 0..4 {
                    let (mut plus, mut minus) = (p, p);
                    plus[j] += eps;
                    minus[j] -= eps;
                    let (fp, fm) = (phase_field(&plus, q), phase_field(&minus, q));
                    for i in 0..4 {
                        let fd = (fp[i] - fm[i]) / (2.0 * eps);
                        prop_assert!((fd - jac[i][j]).abs() < 1e-7);
                    }
                }
            }

            #[test]
            fn inverse_map_roundtrip(
                t in -5.0f64..5.0,
                x in -3.0f64..3.0,
                y in -3.0f64..3.0,
                z in 0.1f64..10.0,
                w in 0.1f64..10.0,
                q in 1.05f64..10.0,
            ) {
                let p = PhasePoint::new(t, [x, y, z, w]);
                let (r, u, du, v, dv) = from_phase(&p, q).unwrap();
                let s = RadialState {
                    r, u, du, v, dv,
                    source_moments: [0.0; 4],
                    laplacian_moments: [0.0; 2],
                };
                let back = to_phase(&s, q).unwrap();
                for (a, b) in back.coords().iter().zip(p.coords()) {
                    prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                }
            }
        }
    }
}
