//! Browser bindings: one trajectory, its phase-space image, and the threshold
//! search. Each export returns a JSON string; the `*_json` functions are the
//! same operations without the JavaScript error type, usable natively.

use biharmonic_core::asymptotics::kappa_from_identity;
use biharmonic_core::phase_space::{fixed_point_report, phase_trajectory, LinearizationReport};
use biharmonic_core::radial_ode::{integrate, Controls, ProblemParams, SolutionClass, Trajectory};
use biharmonic_core::shooting::{find_beta_star, gamma_limit, ShootingOptions};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SAMPLES_PER_DECADE: usize = 40;

fn run(q: f64, beta: f64, r_stop: f64) -> Result<Trajectory, String> {
    let params = ProblemParams::new(q, beta)
        .map_err(|e| e.to_string())?
        .with_r_stop(r_stop);
    params.validate().map_err(|e| e.to_string())?;
    let controls = Controls::default().with_samples_per_decade(SAMPLES_PER_DECADE);
    integrate(&params, &controls).map_err(|e| e.to_string())
}

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct TrajectoryView {
    pub q: f64,
    pub beta: f64,
    pub classification: SolutionClass,
    pub gamma: Option<f64>,
    pub kappa: Option<f64>,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn trajectory_view(q: f64, beta: f64, r_stop: f64) -> Result<TrajectoryView, String> {
    let traj = run(q, beta, r_stop)?;
    let (gamma, kappa) = if traj.is_global() {
        (
            gamma_limit(&traj).ok().map(|g| g.corrected),
            kappa_from_identity(&traj).ok(),
        )
    } else {
        (None, None)
    };
    Ok(TrajectoryView {
        q,
        beta,
        classification: traj.classification.clone(),
        gamma,
        kappa,
        r: traj.samples.iter().map(|s| s.r).collect(),
        u: traj.samples.iter().map(|s| s.u).collect(),
        v: traj.samples.iter().map(|s| s.v).collect(),
    })
}

pub fn trajectory_json(q: f64, beta: f64, r_stop: f64) -> Result<String, String> {
    json(&trajectory_view(q, beta, r_stop)?)
}

#[derive(Debug, Serialize)]
pub struct PhaseView {
    pub q: f64,
    pub beta: f64,
    pub classification: SolutionClass,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub critical_points: Vec<LinearizationReport>,
}

pub fn phase_view(q: f64, beta: f64, r_stop: f64) -> Result<PhaseView, String> {
    let traj = run(q, beta, r_stop)?;
    let path = phase_trajectory(&traj, q).map_err(|e| e.to_string())?;
    let pts = &path.points;
    Ok(PhaseView {
        q,
        beta,
        classification: traj.classification.clone(),
        t: pts.iter().map(|p| p.t).collect(),
        x: pts.iter().map(|p| p.x).collect(),
        y: pts.iter().map(|p| p.y).collect(),
        z: pts.iter().map(|p| p.z).collect(),
        w: pts.iter().map(|p| p.w).collect(),
        critical_points: fixed_point_report(q).map_err(|e| e.to_string())?,
    })
}

pub fn phase_json(q: f64, beta: f64, r_stop: f64) -> Result<String, String> {
    json(&phase_view(q, beta, r_stop)?)
}

#[derive(Debug, Serialize)]
pub struct ThresholdView {
    pub q: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub beta_star: f64,
    pub iterations: usize,
    pub gamma_at_bracket: f64,
}

pub fn threshold_view(q: f64, tol: f64) -> Result<ThresholdView, String> {
    let res =
        find_beta_star(q, None, tol, &ShootingOptions::default()).map_err(|e| e.to_string())?;
    Ok(ThresholdView {
        q,
        beta_lo: res.beta_lo,
        beta_hi: res.beta_hi,
        beta_star: res.beta_star,
        iterations: res.iterations,
        gamma_at_bracket: res.gamma_at_bracket,
    })
}

pub fn threshold_json(q: f64, tol: f64) -> Result<String, String> {
    json(&threshold_view(q, tol)?)
}

#[wasm_bindgen]
pub fn trajectory(q: f64, beta: f64, r_stop: f64) -> Result<String, JsError> {
    trajectory_json(q, beta, r_stop).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn phase(q: f64, beta: f64, r_stop: f64) -> Result<String, JsError> {
    phase_json(q, beta, r_stop).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn threshold(q: f64, tol: f64) -> Result<String, JsError> {
    threshold_json(q, tol).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q7_threshold() {
        let t = threshold_view(7.0, 1e-5).unwrap();
        assert!((t.beta_star - 3.0 / 15f64.sqrt()).abs() < 1e-4);
    }

    #[test]
    fn trajectory_classes() {
        let below = trajectory_view(7.0, 0.5, 1e4).unwrap();
        assert!(below.classification.is_blow_down());
        assert!(below.kappa.is_none());
        let above = trajectory_view(2.0, 5.0, 1e4).unwrap();
        assert!(above.classification.is_global());
        assert!(above.kappa.unwrap() > 0.0);
        assert_eq!(above.r.len(), above.u.len());
    }

    #[test]
    fn phase_ends_near_p2() {
        let v = phase_view(2.0, 5.0, 1e5).unwrap();
        assert_eq!(v.critical_points.len(), 9);
        let (x, z) = (*v.x.last().unwrap(), *v.z.last().unwrap());
        assert!((x - 2.0).abs() < 0.05 && (z - 6.0).abs() < 0.3, "{x} {z}");
    }

    #[test]
    fn bad_input_is_an_error_string() {
        assert!(trajectory_json(0.5, 1.0, 1e3)
            .unwrap_err()
            .contains("q must exceed 1"));
        let text = threshold_json(7.0, 1e-3).unwrap();
        assert!(text.contains("\"beta_star\""));
    }
}
