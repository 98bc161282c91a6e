//! Threshold search over `β = Δu(0)`.
//!
//! Small `β` makes `u` collapse to zero at a finite radius, large `β` gives
//! a global solution with `Δu → γ > 0`. The boundary `β⋆` is located by
//! bisection on the integrator's classification, and `γ` is estimated with a
//! modeled tail beyond the horizon.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::radial_ode::{
    integrate, power_law_tail, tail_corrected_gamma, Controls, ProblemParams, SolutionClass,
    Trajectory,
};

/// Horizon and integrator settings for classification runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingOptions {
    pub horizon: f64,
    pub controls: Controls,
    /// Largest number of bisection steps before giving up.
    pub max_iterations: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            horizon: 1e5,
            controls: Controls::default().with_samples_per_decade(4),
            max_iterations: 200,
        }
    }
}

/// Side of the threshold a classification counts towards during bisection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    BlowDown,
    Global,
}

/// Classification of one `β` together with how it was reached.
#[derive(Debug, Clone, PartialEq)]
pub struct Classified {
    pub beta: f64,
    pub class: SolutionClass,
    pub side: Side,
    /// Set when the run stayed undetermined after the horizon retry.
    pub flagged: bool,
    pub horizon: f64,
    pub trajectory: Trajectory,
}

fn run(q: f64, beta: f64, horizon: f64, controls: &Controls) -> Result<Trajectory> {
    let params = ProblemParams::new(q, beta)?.with_r_stop(horizon);
    integrate(&params, controls)
}

/// Classify `β`, retrying once at twice the horizon when undetermined.
///
/// A run that is still undetermined is assigned to a side by the sign of its
/// tail-corrected `γ` (global when no estimate exists) and flagged.
pub fn classify_detailed(q: f64, beta: f64, opts: &ShootingOptions) -> Result<Classified> {
    let mut horizon = opts.horizon;
    let mut traj = run(q, beta, horizon, &opts.controls)?;
    if matches!(traj.classification, SolutionClass::Undetermined { .. }) {
        horizon *= 2.0;
        traj = run(q, beta, horizon, &opts.controls)?;
    }
    let (side, flagged) = match &traj.classification {
        SolutionClass::Global { .. } => (Side::Global, false),
        SolutionClass::BlowDown { .. } => (Side::BlowDown, false),
        SolutionClass::Undetermined { .. } => {
            let last = traj.last();
            let certain_collapse = last.v <= 0.0 || beta - last.source_moment(1) < 0.0;
            match tail_corrected_gamma(last, q) {
                _ if certain_collapse => (Side::BlowDown, true),
                Some(g) if g < 0.0 => (Side::BlowDown, true),
                _ => (Side::Global, true),
            }
        }
    };
    Ok(Classified {
        beta,
        class: traj.classification.clone(),
        side,
        flagged,
        horizon,
        trajectory: traj,
    })
}

pub fn classify_beta(q: f64, beta: f64, opts: &ShootingOptions) -> Result<SolutionClass> {
    Ok(classify_detailed(q, beta, opts)?.class)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingResult {
    pub q: f64,
    /// Blow-down side of the final bracket.
    pub beta_lo: f64,
    /// Global side of the final bracket.
    pub beta_hi: f64,
    pub beta_star: f64,
    /// Tail-corrected `γ` at `beta_hi`.
    pub gamma_at_bracket: f64,
    pub iterations: usize,
    pub tol: f64,
    pub horizon: f64,
    /// `β` values whose classification was undetermined after the retry.
    pub flagged: Vec<f64>,
    #[serde(skip)]
    pub trajectories_kept: Option<(Trajectory, Trajectory)>,
}

/// Geometric scan `β = 2ᵏ`, `k = −20..=20`, for the first blow-down/global pair.
pub fn auto_bracket(q: f64, opts: &ShootingOptions) -> Result<(Classified, Classified)> {
    let mut below: Option<Classified> = None;
    for k in -20..=20 {
        let c = classify_detailed(q, 2f64.powi(k), opts)?;
        match c.side {
            Side::BlowDown => below = Some(c),
            Side::Global => return below.map(|b| (b, c)).ok_or(Error::NoBracket),
        }
    }
    Err(Error::NoBracket)
}

/// Bisect for `β⋆` until the bracket is no wider than `tol`.
///
/// With `bracket0 = None` the bracket comes from [`auto_bracket`].
pub fn find_beta_star(
    q: f64,
    bracket0: Option<(f64, f64)>,
    tol: f64,
    opts: &ShootingOptions,
) -> Result<ShootingResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParams(format!(
            "tol must be positive (got {tol})"
        )));
    }
    let (mut lo, mut hi) = match bracket0 {
        Some((a, b)) => {
            let (a, b) = (a.min(b), a.max(b));
            let lo = classify_detailed(q, a, opts)?;
            let hi = classify_detailed(q, b, opts)?;
            if lo.side != Side::BlowDown || hi.side != Side::Global {
                return Err(Error::NoBracket);
            }
            (lo, hi)
        }
        None => auto_bracket(q, opts)?,
    };
    let mut flagged: Vec<f64> = [&lo, &hi]
        .iter()
        .filter(|c| c.flagged)
        .map(|c| c.beta)
        .collect();
    let mut iterations = 0;
    while hi.beta - lo.beta > tol {
        if iterations >= opts.max_iterations {
            return Err(Error::MaxIterations(opts.max_iterations));
        }
        iterations += 1;
        let mid = 0.5 * (lo.beta + hi.beta);
        if mid <= lo.beta || mid >= hi.beta {
            break;
        }
        let c = classify_detailed(q, mid, opts)?;
        if c.flagged {
            flagged.push(mid);
        }
        match c.side {
            Side::BlowDown => lo = c,
            Side::Global => hi = c,
        }
    }
    let gamma_at_bracket = gamma_limit(&hi.trajectory)
        .map(|g| g.corrected)
        .or_else(|_| {
            tail_corrected_gamma(hi.trajectory.last(), q)
                .ok_or_else(|| Error::NotGlobal("no gamma estimate at beta_hi".into()))
        })?;
    Ok(ShootingResult {
        q,
        beta_lo: lo.beta,
        beta_hi: hi.beta,
        beta_star: 0.5 * (lo.beta + hi.beta),
        gamma_at_bracket,
        iterations,
        tol,
        horizon: opts.horizon,
        flagged,
        trajectories_kept: Some((lo.trajectory, hi.trajectory)),
    })
}

/// `lim v(r)` estimated from the state at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    /// `v(r_stop)`.
    pub raw: f64,
    pub corrected: f64,
    pub model: String,
    pub r_stop: f64,
}

/// `γ = v(R) − (1/R)∫₀ᴿ t² u⁻ᑫ dt − ∫_R^∞ t u⁻ᑫ dt`, the tail integral modeled
/// by the local power law of `u` at `R`.
pub fn gamma_limit(traj: &Trajectory) -> Result<GammaEstimate> {
    if !traj.is_global() {
        return Err(Error::NotGlobal(format!("{:?}", traj.classification)));
    }
    let q = traj.params.q;
    let last = traj.last();
    let x = last.growth_exponent();
    let tail = power_law_tail(last, q, 1)
        .ok_or_else(|| Error::NotGlobal(format!("tail not integrable at growth exponent {x}")))?;
    let moment_term = last.source_moment(2) / last.r;
    Ok(GammaEstimate {
        raw: last.v,
        corrected: last.v - moment_term - tail,
        model: format!("u(t) ~ u(R) (t/R)^{x:.6}; tail {tail:.6e}, (1/R) I2(R) {moment_term:.6e}"),
        r_stop: last.r,
    })
}

/// One persisted threshold search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub tol: f64,
    pub horizon: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_at_bracket: Option<f64>,
}

impl CacheEntry {
    /// Midpoint of the bracket.
    pub fn beta_star(&self) -> f64 {
        0.5 * (self.beta_lo + self.beta_hi)
    }
}

/// On-disk map from canonical `q` strings to threshold brackets.
#[derive(Debug, Clone, Default)]
pub struct BetaStarCache {
    path: Option<PathBuf>,
    pub entries: BTreeMap<String, CacheEntry>,
}

/// Shortest round-trip decimal form of `q`.
pub fn canonical_q(q: f64) -> String {
    format!("{q:?}")
}

impl BetaStarCache {
    /// In-memory cache with no backing file.
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Open (or start) the cache stored at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let entries = match fs::read_to_string(&path) {
            Ok(text) if text.trim().is_empty() => BTreeMap::new(),
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| Error::Cache(format!("{}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(Error::Cache(format!("{}: {e}", path.display()))),
        };
        Ok(Self {
            path: Some(path),
            entries,
        })
    }

    /// Entry for `q` at least as tight as `tol`, computed with `horizon`.
    pub fn lookup(&self, q: f64, tol: f64, horizon: f64) -> Option<&CacheEntry> {
        self.entries
            .get(&canonical_q(q))
            .filter(|e| e.tol <= tol && e.horizon == horizon)
    }

    pub fn insert(&mut self, q: f64, entry: CacheEntry) -> Result<()> {
        self.entries.insert(canonical_q(q), entry);
        self.save()
    }

    /// Write through a temporary file and rename over the target.
    pub fn save(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let text =
            serde_json::to_string_pretty(&self.entries).map_err(|e| Error::Cache(e.to_string()))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::Cache(e.to_string()))?;
        }
        let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
        fs::write(&tmp, text).map_err(|e| Error::Cache(format!("{}: {e}", tmp.display())))?;
        fs::rename(&tmp, path).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))
    }
}

/// Cached threshold search. Returns the entry and whether it was a cache hit.
pub fn find_beta_star_cached(
    q: f64,
    tol: f64,
    opts: &ShootingOptions,
    cache: &mut BetaStarCache,
) -> Result<(CacheEntry, bool)> {
    if let Some(entry) = cache.lookup(q, tol, opts.horizon) {
        return Ok((entry.clone(), true));
    }
    let res = find_beta_star(q, None, tol, opts)?;
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let entry = CacheEntry {
        beta_lo: res.beta_lo,
        beta_hi: res.beta_hi,
        tol,
        horizon: opts.horizon,
        timestamp,
        gamma_at_bracket: Some(res.gamma_at_bracket),
    };
    cache.insert(q, entry.clone())?;
    Ok((entry, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::entire_q7_threshold_beta;
    use crate::radial_ode::{RadialState, StepStats};

    #[test]
    fn q7_classification_around_exact_threshold() {
        let opts = ShootingOptions::default();
        let b = entire_q7_threshold_beta();
        assert!(classify_beta(7.0, b + 0.1, &opts).unwrap().is_global());
        assert!(classify_beta(7.0, b - 0.1, &opts).unwrap().is_blow_down());
        assert!(classify_beta(2.0, 10.0, &opts).unwrap().is_global());
    }

    #[test]
    fn q7_threshold_bisection() {
        let res = find_beta_star(7.0, None, 1e-6, &ShootingOptions::default()).unwrap();
        assert!(res.beta_hi - res.beta_lo <= 1e-6);
        assert!(
            (res.beta_star - entire_q7_threshold_beta()).abs() < 1e-4,
            "{res:?}"
        );
        let opts = ShootingOptions::default();
        assert_eq!(
            classify_detailed(7.0, res.beta_lo, &opts).unwrap().side,
            Side::BlowDown
        );
        assert_eq!(
            classify_detailed(7.0, res.beta_hi, &opts).unwrap().side,
            Side::Global
        );
    }

    #[test]
    fn explicit_bracket_must_disagree() {
        let opts = ShootingOptions::default();
        assert_eq!(
            find_beta_star(2.0, Some((20.0, 30.0)), 1e-3, &opts).unwrap_err(),
            Error::NoBracket
        );
    }

    fn synthetic(gamma0: f64, r_stop: f64) -> Trajectory {
        let params = ProblemParams::new(2.0, 1.0).unwrap().with_r_stop(r_stop);
        let samples = [r_stop / 10.0, r_stop]
            .iter()
            .map(|&r| RadialState {
                r,
                u: 1e6 * r * r,
                du: 2e6 * r,
                v: gamma0 + 1.0 / r,
                dv: -1.0 / (r * r),
                source_moments: [0.0; 4],
                laplacian_moments: [0.0; 2],
            })
            .collect();
        Trajectory {
            params,
            samples,
            classification: SolutionClass::Global { gamma: gamma0 },
            step_stats: StepStats::default(),
        }
    }

    #[test]
    fn gamma_of_decaying_perturbation() {
        let errs: Vec<f64> = [1e2, 1e4, 1e6]
            .iter()
            .map(|&r| (gamma_limit(&synthetic(0.5, r)).unwrap().corrected - 0.5).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2] && errs[2] < 1e-5);
        let g = gamma_limit(&synthetic(0.5, 1e3)).unwrap();
        assert!(g.corrected <= g.raw);
    }

    #[test]
    fn gamma_requires_global() {
        let mut t = synthetic(0.5, 1e3);
        t.classification = SolutionClass::BlowDown { r_max: 10.0 };
        assert!(matches!(gamma_limit(&t), Err(Error::NotGlobal(_))));
    }

    #[test]
    fn cache_round_trip_and_hit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("beta_star.json");
        let opts = ShootingOptions::default();
        let mut cache = BetaStarCache::open(&path).unwrap();
        let (first, hit) = find_beta_star_cached(7.0, 1e-3, &opts, &mut cache).unwrap();
        assert!(!hit);
        let mut reopened = BetaStarCache::open(&path).unwrap();
        let (second, hit) = find_beta_star_cached(7.0, 1e-3, &opts, &mut reopened).unwrap();
        assert!(hit);
        assert_eq!(first, second);
        // A looser request is served by the tighter entry; a tighter one is not.
        assert!(reopened.lookup(7.0, 1e-2, opts.horizon).is_some());
        assert!(reopened.lookup(7.0, 1e-4, opts.horizon).is_none());
        assert!(reopened.lookup(7.0, 1e-3, 2e5).is_none());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"7.0\""));
    }
}
