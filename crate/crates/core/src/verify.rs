//! Verification suites: each check compares one measured quantity against an
//! exact or predicted value and records the outcome.
//!
//! A failing computation marks its record failed; it never aborts the run.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::asymptotics::{
    analyze, chi, chi_tail_terms, distinct_pair_witness, fit_convergence_rate, kappa_from_growth,
    kappa_from_identity, max_relative_spread, scale_to_target, second_order_limit, Regime,
};
use crate::error::{Error, Result};
use crate::oracles::{biharmonic_residual, entire_q7_threshold_beta, ExactSolution};
use crate::phase_space::{
    eigenvalues, fixed_points, jacobian, multiset_distance, phase_field, phase_trajectory,
    to_phase, P2,
};
use crate::radial_ode::{
    integrate, integrate_from, representation_residuals, Controls, ProblemParams, RadialState,
    Trajectory,
};
use crate::shooting::{find_beta_star, find_beta_star_cached, BetaStarCache, ShootingOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Threshold,
    ExactTracking,
    FixedPoints,
    Eigen,
    GrowthIdentity,
    GammaMonotone,
    SecondOrder,
    Rates,
    Scaling,
    Representation,
    SingularPower,
}

impl Suite {
    pub const ALL: [Suite; 11] = [
        Suite::Threshold,
        Suite::ExactTracking,
        Suite::FixedPoints,
        Suite::Eigen,
        Suite::GrowthIdentity,
        Suite::GammaMonotone,
        Suite::SecondOrder,
        Suite::Rates,
        Suite::Scaling,
        Suite::SingularPower,
        Suite::Representation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Threshold => "threshold",
            Suite::ExactTracking => "exact-tracking",
            Suite::FixedPoints => "fixed-points",
            Suite::Eigen => "eigen",
            Suite::GrowthIdentity => "growth-identity",
            Suite::GammaMonotone => "gamma-monotone",
            Suite::SecondOrder => "second-order",
            Suite::Rates => "rates",
            Suite::Scaling => "scaling",
            Suite::Representation => "representation",
            Suite::SingularPower => "singular-power",
        }
    }

    /// Exponents used when no q-list is given.
    pub fn default_q_list(self) -> Vec<f64> {
        match self {
            Suite::FixedPoints | Suite::Eigen => vec![1.1, 1.25, 1.5, 2.0, 3.0, 7.0, 10.0],
            Suite::GrowthIdentity => vec![1.25, 2.0, 7.0],
            Suite::SecondOrder => vec![2.0, 1.5, 1.25],
            Suite::Rates => vec![1.25, 1.5, 2.0],
            Suite::Representation => vec![1.25, 1.5, 2.0, 7.0],
            Suite::Threshold | Suite::ExactTracking => vec![7.0],
            Suite::GammaMonotone | Suite::Scaling | Suite::SingularPower => vec![2.0],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown suite '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|measured − expected| ≤ tolerance`.
    AbsDiff,
    /// `|measured − expected| ≤ tolerance · |expected|`.
    RelDiff,
    /// `measured ≤ tolerance`.
    AtMost,
    /// `measured < expected`.
    Below,
    /// `measured > expected`.
    Above,
}

impl Comparison {
    pub fn holds(self, measured: f64, expected: f64, tolerance: f64) -> bool {
        match self {
            Comparison::AbsDiff => (measured - expected).abs() <= tolerance,
            Comparison::RelDiff => (measured - expected).abs() <= tolerance * expected.abs(),
            Comparison::AtMost => measured <= tolerance,
            Comparison::Below => measured < expected,
            Comparison::Above => measured > expected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub suite: Suite,
    pub id: String,
    pub q: Option<f64>,
    pub inputs: serde_json::Value,
    /// `None` when the computation failed; see `detail`.
    pub measured: Option<f64>,
    pub expected: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for CheckRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let q = self.q.map(|q| format!(" q={q}")).unwrap_or_default();
        let measured = self
            .measured
            .map(|m| format!("{m:.10e}"))
            .unwrap_or_else(|| "error".into());
        write!(
            f,
            "{verdict} {}/{}{q}: measured {measured}, expected {:.10e} ({:?}, tol {:e})",
            self.suite, self.id, self.expected, self.comparison, self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, " [{}]", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub suites: Vec<Suite>,
    pub q_list: Option<Vec<f64>>,
    pub rtol: f64,
    pub atol: f64,
    /// Offset added to `β⋆` for the global runs.
    pub beta_offset: f64,
    /// Bracket width for threshold searches.
    pub shoot_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            suites: Suite::ALL.to_vec(),
            q_list: None,
            rtol: 1e-10,
            atol: 1e-12,
            beta_offset: 1.0,
            shoot_tol: 1e-6,
        }
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        Controls::default()
            .with_tolerances(self.rtol, self.atol)
            .validate()?;
        if let Some(list) = &self.q_list {
            if list.is_empty() {
                return Err(Error::InvalidParams("empty q-list".into()));
            }
            if let Some(q) = list.iter().find(|q| !(q.is_finite() && **q > 1.0)) {
                return Err(Error::InvalidParams(format!("q must exceed 1 (got {q})")));
            }
        }
        if !(self.beta_offset > 0.0) {
            return Err(Error::InvalidParams("beta offset must be positive".into()));
        }
        if !(self.shoot_tol > 0.0) {
            return Err(Error::InvalidParams(
                "shooting tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tool_version: String,
    pub config: VerifyConfig,
    pub records: Vec<CheckRecord>,
    pub passed: usize,
    pub failed: usize,
    pub pass: bool,
}

impl VerifyReport {
    pub fn new(config: VerifyConfig, records: Vec<CheckRecord>) -> Self {
        let passed = records.iter().filter(|r| r.pass).count();
        let failed = records.len() - passed;
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            records,
            passed,
            failed,
            pass: failed == 0,
        }
    }
}

/// Runs suites, sharing threshold searches through a cache and remembering
/// every global trajectory so the representation suite can re-check them.
pub struct Verifier {
    pub config: VerifyConfig,
    pub cache: BetaStarCache,
    runs: Vec<(String, Trajectory)>,
}

struct Check<'a> {
    suite: Suite,
    id: &'a str,
    q: Option<f64>,
    inputs: serde_json::Value,
}

impl Check<'_> {
    fn against(
        self,
        measured: Result<f64>,
        expected: f64,
        tolerance: f64,
        comparison: Comparison,
    ) -> CheckRecord {
        let (measured, pass, detail) = match measured {
            Ok(m) => (
                Some(m),
                comparison.holds(m, expected, tolerance),
                String::new(),
            ),
            Err(e) => (None, false, e.to_string()),
        };
        CheckRecord {
            suite: self.suite,
            id: self.id.to_string(),
            q: self.q,
            inputs: self.inputs,
            measured,
            expected,
            tolerance,
            comparison,
            pass,
            detail,
        }
    }
}

fn check(suite: Suite, id: &str, q: Option<f64>, inputs: serde_json::Value) -> Check<'_> {
    Check {
        suite,
        id,
        q,
        inputs,
    }
}

fn failed(suite: Suite, id: &str, q: Option<f64>, e: Error) -> CheckRecord {
    check(suite, id, q, json!({})).against(Err(e), 0.0, 0.0, Comparison::AtMost)
}

/// Largest `max(|res_u|, |res_v|) / (rtol (1 + |u|))` over the samples.
pub fn representation_ratio(params: &ProblemParams, samples: &[RadialState], rtol: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let (a, b) = representation_residuals(params, s);
            a.abs().max(b.abs()) / (rtol * (1.0 + s.u.abs()))
        })
        .fold(0.0, f64::max)
}

impl Verifier {
    pub fn new(config: VerifyConfig, cache: BetaStarCache) -> Self {
        Self {
            config,
            cache,
            runs: Vec::new(),
        }
    }

    fn controls(&self) -> Controls {
        Controls::default().with_tolerances(self.config.rtol, self.config.atol)
    }

    fn q_list(&self, suite: Suite) -> Vec<f64> {
        self.config
            .q_list
            .clone()
            .unwrap_or_else(|| suite.default_q_list())
    }

    pub fn beta_star(&mut self, q: f64) -> Result<f64> {
        let (entry, _) = find_beta_star_cached(
            q,
            self.config.shoot_tol,
            &ShootingOptions::default(),
            &mut self.cache,
        )?;
        Ok(entry.beta_star())
    }

    /// Global run at `β⋆ + offset`, remembered for the representation suite.
    fn global_run(&mut self, q: f64, r_stop: f64) -> Result<Trajectory> {
        let beta = self.beta_star(q)? + self.config.beta_offset;
        let params = ProblemParams::new(q, beta)?.with_r_stop(r_stop);
        let traj = integrate(&params, &self.controls())?;
        if !traj.is_global() {
            return Err(Error::NotGlobal(format!(
                "q = {q}, beta = {beta}: {:?}",
                traj.classification
            )));
        }
        self.remember(format!("q={q} beta={beta} r_stop={r_stop:e}"), &traj);
        Ok(traj)
    }

    fn remember(&mut self, label: String, traj: &Trajectory) {
        if traj.is_global() && !self.runs.iter().any(|(l, _)| *l == label) {
            self.runs.push((label, traj.clone()));
        }
    }

    pub fn run(mut self) -> (VerifyReport, BetaStarCache) {
        let mut records = Vec::new();
        let mut suites = self.config.suites.clone();
        // re-check representations after every other suite has produced runs
        suites.sort_by_key(|s| *s == Suite::Representation);
        for suite in suites {
            records.extend(self.run_suite(suite));
        }
        (VerifyReport::new(self.config.clone(), records), self.cache)
    }

    pub fn run_suite(&mut self, suite: Suite) -> Vec<CheckRecord> {
        match suite {
            Suite::Threshold => self.threshold(),
            Suite::ExactTracking => self.exact_tracking(),
            Suite::FixedPoints => self.fixed_points(),
            Suite::Eigen => self.eigen(),
            Suite::GrowthIdentity => self.growth_identity(),
            Suite::GammaMonotone => self.gamma_monotone(),
            Suite::SecondOrder => self.second_order(),
            Suite::Rates => self.rates(),
            Suite::Scaling => self.scaling(),
            Suite::Representation => self.representation(),
            Suite::SingularPower => self.singular_power(),
        }
    }

    fn threshold(&mut self) -> Vec<CheckRecord> {
        let tol = self.config.shoot_tol;
        let measured =
            find_beta_star(7.0, None, tol, &ShootingOptions::default()).map(|r| r.beta_star);
        vec![check(
            Suite::Threshold,
            "beta-star",
            Some(7.0),
            json!({ "tol": tol }),
        )
        .against(
            measured,
            entire_q7_threshold_beta(),
            1e-4,
            Comparison::AbsDiff,
        )]
    }

    fn exact_tracking(&mut self) -> Vec<CheckRecord> {
        let sol = ExactSolution::entire_q7(true);
        let controls = self.controls();
        let measured = (|| {
            let (params, seed) = sol.seed_state(1e-3)?;
            let traj = integrate_from(&params.with_r_stop(1e3), seed, &controls)?;
            self.remember("q=7 exact seed".into(), &traj);
            Ok(traj
                .samples
                .iter()
                .map(|s| ((s.u - sol.eval(s.r).u) / sol.eval(s.r).u).abs())
                .fold(0.0, f64::max))
        })();
        vec![check(
            Suite::ExactTracking,
            "max-relative-error",
            Some(7.0),
            json!({ "r_seed": 1e-3, "r_stop": 1e3, "rtol": controls.rtol }),
        )
        .against(measured, 0.0, 1e-7, Comparison::AtMost)]
    }

    fn fixed_points(&mut self) -> Vec<CheckRecord> {
        self.q_list(Suite::FixedPoints)
            .into_iter()
            .map(|q| {
                let measured = fixed_points(q).map(|set| {
                    set.points
                        .iter()
                        .flat_map(|(_, p)| phase_field(p, q))
                        .fold(0.0, |m: f64, x| m.max(x.abs()))
                });
                check(
                    Suite::FixedPoints,
                    "max-field-norm",
                    Some(q),
                    json!({ "points": 9 }),
                )
                .against(measured, 0.0, 1e-12, Comparison::AtMost)
            })
            .collect()
    }

    fn eigen(&mut self) -> Vec<CheckRecord> {
        self.q_list(Suite::Eigen)
            .into_iter()
            .map(|q| {
                let want: Vec<_> = [-1.0, -2.0, -3.0, 2.0 - 2.0 * q]
                    .iter()
                    .map(|&x| num_complex::Complex64::new(x, 0.0))
                    .collect();
                let measured = eigenvalues(&jacobian(&P2, q))
                    .map(|e| multiset_distance(&e, &want).unwrap_or(f64::INFINITY));
                check(
                    Suite::Eigen,
                    "p2-spectrum",
                    Some(q),
                    json!({ "expected": [-1.0, -2.0, -3.0, 2.0 - 2.0 * q] }),
                )
                .against(measured, 0.0, 1e-9, Comparison::AtMost)
            })
            .collect()
    }

    fn growth_identity(&mut self) -> Vec<CheckRecord> {
        self.q_list(Suite::GrowthIdentity)
            .into_iter()
            .map(|q| {
                let tol = if q >= 2.0 { 1e-4 } else { 1e-3 };
                let measured = self.global_run(q, 1e5).and_then(|traj| {
                    let routes = [
                        kappa_from_growth(&traj, None)?.value,
                        kappa_from_identity(&traj)?,
                        crate::asymptotics::gamma_over_6(&traj)?,
                    ];
                    Ok(max_relative_spread(&routes))
                });
                check(
                    Suite::GrowthIdentity,
                    "kappa-route-spread",
                    Some(q),
                    json!({ "beta_offset": self.config.beta_offset, "r_stop": 1e5 }),
                )
                .against(measured, 0.0, tol, Comparison::AtMost)
            })
            .collect()
    }

    fn gamma_monotone(&mut self) -> Vec<CheckRecord> {
        let q = 2.0;
        let tols = [1e-2, 1e-4, 1e-6];
        let gammas: Vec<Result<f64>> = tols
            .iter()
            .map(|&tol| {
                find_beta_star(q, None, tol, &ShootingOptions::default())
                    .map(|r| r.gamma_at_bracket)
            })
            .collect();
        let mut out = Vec::new();
        for (i, g) in gammas.iter().enumerate() {
            out.push(
                check(
                    Suite::GammaMonotone,
                    "gamma-positive",
                    Some(q),
                    json!({ "tol": tols[i] }),
                )
                .against(g.clone(), 0.0, 0.0, Comparison::Above),
            );
        }
        for i in 1..tols.len() {
            let rec = match (&gammas[i - 1], &gammas[i]) {
                (Ok(prev), cur) => check(
                    Suite::GammaMonotone,
                    "gamma-decreases",
                    Some(q),
                    json!({ "tol": tols[i], "previous_tol": tols[i - 1] }),
                )
                .against(cur.clone(), *prev, 0.0, Comparison::Below),
                (Err(e), _) => failed(Suite::GammaMonotone, "gamma-decreases", Some(q), e.clone()),
            };
            out.push(rec);
        }
        out
    }

    fn second_order(&mut self) -> Vec<CheckRecord> {
        let mut out = Vec::new();
        for q in self.q_list(Suite::SecondOrder) {
            let regime = Regime::of(q);
            let r_stop = if regime == Regime::Above { 1e5 } else { 1e6 };
            let tol = if regime == Regime::Above { 0.01 } else { 0.10 };
            let inputs = json!({ "beta_offset": self.config.beta_offset, "r_stop": r_stop, "regime": regime });
            let so = self
                .global_run(q, r_stop)
                .and_then(|t| second_order_limit(&t));
            let so = match so {
                Ok(s) => s,
                Err(e) => {
                    out.push(failed(Suite::SecondOrder, "limit", Some(q), e));
                    continue;
                }
            };
            out.push(
                check(Suite::SecondOrder, "limit", Some(q), inputs.clone()).against(
                    Ok(so.measured),
                    so.predicted,
                    tol,
                    Comparison::RelDiff,
                ),
            );
            if let Some(alt) = so.alternative {
                out.push(
                    check(Suite::SecondOrder, "no-half-ratio", Some(q), inputs.clone()).against(
                        Ok(alt / so.measured),
                        2.0,
                        0.02,
                        Comparison::RelDiff,
                    ),
                );
                out.push(
                    check(
                        Suite::SecondOrder,
                        "no-half-rejected",
                        Some(q),
                        inputs.clone(),
                    )
                    .against(
                        Ok(((so.measured - alt) / alt).abs()),
                        tol,
                        0.0,
                        Comparison::Above,
                    ),
                );
            }
            if regime == Regime::Below {
                let measured = chi_tail_terms(q, so.kappa, r_stop).map(|t| t.iter().sum());
                out.push(
                    check(
                        Suite::SecondOrder,
                        "chi-tail-integrals",
                        Some(q),
                        json!({ "kappa": so.kappa, "r": r_stop }),
                    )
                    .against(
                        measured,
                        chi(q, so.kappa).unwrap_or(f64::NAN),
                        1e-10,
                        Comparison::RelDiff,
                    ),
                );
            }
        }
        out
    }

    fn rates(&mut self) -> Vec<CheckRecord> {
        let mut out = Vec::new();
        for q in self.q_list(Suite::Rates) {
            let inputs =
                json!({ "beta_offset": self.config.beta_offset, "r_stop": 1e6, "decades": 3.0 });
            let fit = self
                .global_run(q, 1e6)
                .and_then(|t| phase_trajectory(&t, q))
                .and_then(|p| fit_convergence_rate(&p, 3.0));
            let fit = match fit {
                Ok(f) => f,
                Err(e) => {
                    out.push(failed(Suite::Rates, "decay-rate", Some(q), e));
                    continue;
                }
            };
            if fit.log_profile {
                out.push(
                    check(Suite::Rates, "t-profile-residual", Some(q), inputs).against(
                        Ok(fit.residual_t_exponential),
                        fit.residual_exponential,
                        0.0,
                        Comparison::Below,
                    ),
                );
            } else {
                out.push(check(Suite::Rates, "decay-rate", Some(q), inputs).against(
                    Ok(fit.rate),
                    fit.predicted_rate,
                    0.10,
                    Comparison::RelDiff,
                ));
            }
        }
        out
    }

    fn scaling(&mut self) -> Vec<CheckRecord> {
        let q = 2.0;
        let target = 5.0;
        let controls = self.controls();
        let mut out = Vec::new();
        let scaled = (|| {
            let traj = self.global_run(q, 1e5)?;
            let kappa = kappa_from_identity(&traj)?;
            let scaled = scale_to_target(&traj.params, kappa, target)?;
            let run = integrate(&scaled.params, &controls)?;
            self.remember(format!("q={q} scaled to {target}"), &run);
            Ok(kappa_from_growth(&run, None)?.value)
        })();
        out.push(
            check(
                Suite::Scaling,
                "scaled-growth",
                Some(q),
                json!({ "target": target }),
            )
            .against(scaled, target, 5e-6, Comparison::AbsDiff),
        );

        let witness = self.beta_star(q).and_then(|bs| {
            let off = self.config.beta_offset;
            distinct_pair_witness(q, bs + 0.5 * off, bs + 1.5 * off, 1.0, bs, 1e5, &controls)
        });
        match witness {
            Ok(w) => {
                let inputs =
                    json!({ "beta": [w.beta.0, w.beta.1], "target": w.target, "branch": w.branch });
                for (id, g) in [
                    ("witness-growth-1", w.growth.0),
                    ("witness-growth-2", w.growth.1),
                ] {
                    out.push(check(Suite::Scaling, id, Some(q), inputs.clone()).against(
                        Ok(g.value),
                        w.target,
                        1e-5,
                        Comparison::AbsDiff,
                    ));
                }
                let sep = match w.branch {
                    crate::asymptotics::WitnessBranch::Rescaled => w.initial_separation,
                    crate::asymptotics::WitnessBranch::EqualGrowth => w.grid_separation,
                };
                out.push(
                    check(Suite::Scaling, "witness-separation", Some(q), inputs).against(
                        Ok(sep),
                        0.0,
                        0.0,
                        Comparison::Above,
                    ),
                );
            }
            Err(e) => out.push(failed(Suite::Scaling, "witness", Some(q), e)),
        }
        out
    }

    fn representation(&mut self) -> Vec<CheckRecord> {
        for q in self.q_list(Suite::Representation) {
            if let Err(e) = self.global_run(q, 1e5) {
                return vec![failed(Suite::Representation, "residual-ratio", Some(q), e)];
            }
        }
        let rtol = self.config.rtol;
        self.runs
            .iter()
            .map(|(label, traj)| {
                let ratio = representation_ratio(&traj.params, &traj.samples, rtol);
                check(
                    Suite::Representation,
                    "residual-ratio",
                    Some(traj.params.q),
                    json!({ "run": label, "rtol": rtol, "samples": traj.samples.len() }),
                )
                .against(Ok(ratio), 0.0, 100.0, Comparison::AtMost)
            })
            .collect()
    }

    fn singular_power(&mut self) -> Vec<CheckRecord> {
        let mut out = Vec::new();
        for q in self.q_list(Suite::SingularPower) {
            let sol = match ExactSolution::singular_power(q) {
                Ok(s) => s,
                Err(e) => {
                    out.push(failed(Suite::SingularPower, "fd-order", Some(q), e));
                    continue;
                }
            };
            let errs: Result<Vec<f64>> = [0.04f64, 0.02, 0.01]
                .iter()
                .map(|&h| {
                    let n = (2.0 / h).round() as usize;
                    let r: Vec<f64> = (0..=n).map(|i| 1.0 + h * i as f64).collect();
                    let u: Vec<f64> = r.iter().map(|&x| sol.eval(x).u).collect();
                    let grid = biharmonic_residual(&r, &u, q)?;
                    Ok(grid
                        .r
                        .iter()
                        .zip(&grid.residual)
                        .filter(|(x, _)| (1.5..=2.5).contains(*x))
                        .fold(0.0, |m: f64, (_, e)| m.max(e.abs())))
                })
                .collect();
            match errs {
                Ok(errs) => {
                    for w in errs.windows(2) {
                        out.push(
                            check(
                                Suite::SingularPower,
                                "fd-order",
                                Some(q),
                                json!({ "errors": w }),
                            )
                            .against(
                                Ok((w[0] / w[1]).log2()),
                                2.0,
                                0.15,
                                Comparison::AbsDiff,
                            ),
                        );
                    }
                }
                Err(e) => out.push(failed(Suite::SingularPower, "fd-order", Some(q), e)),
            }
            let p3 = fixed_points(q).ok().and_then(|s| s.get("p3"));
            let measured = (|| {
                let p3 = p3.ok_or_else(|| Error::InvalidParams("no p3".into()))?;
                let mut worst: f64 = 0.0;
                for k in 0..=70 {
                    let r = 10f64.powf(-3.0 + 0.1 * k as f64);
                    let e = sol.eval(r);
                    let s = RadialState {
                        r,
                        u: e.u,
                        du: e.du,
                        v: e.v,
                        dv: e.dv,
                        source_moments: [0.0; 4],
                        laplacian_moments: [0.0; 2],
                    };
                    worst = worst.max(to_phase(&s, q)?.distance_to(&p3));
                }
                Ok(worst)
            })();
            out.push(
                check(
                    Suite::SingularPower,
                    "phase-image-p3",
                    Some(q),
                    json!({ "r_range": [1e-3, 1e4] }),
                )
                .against(measured, 0.0, 1e-12, Comparison::AtMost),
            );
        }
        out
    }
}

/// Full asymptotics report for the global run at `β⋆ + offset`.
pub fn asymptotics_for(
    q: f64,
    beta: f64,
    r_stop: f64,
    controls: &Controls,
) -> Result<crate::asymptotics::AsymptoticsReport> {
    let params = ProblemParams::new(q, beta)?.with_r_stop(r_stop);
    let traj = integrate(&params, controls)?;
    analyze(&traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(suites: &[Suite]) -> VerifyReport {
        let config = VerifyConfig {
            suites: suites.to_vec(),
            ..VerifyConfig::default()
        };
        Verifier::new(config, BetaStarCache::in_memory()).run().0
    }

    #[test]
    fn suite_names_roundtrip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
            assert_eq!(
                serde_json::to_string(&s).unwrap(),
                format!("\"{}\"", s.name())
            );
        }
        assert!("theorem".parse::<Suite>().is_err());
    }

    #[test]
    fn comparisons() {
        assert!(Comparison::AbsDiff.holds(1.0, 1.05, 0.1));
        assert!(!Comparison::RelDiff.holds(1.0, 2.0, 0.1));
        assert!(Comparison::AtMost.holds(1e-13, 0.0, 1e-12));
        assert!(Comparison::Below.holds(1.0, 2.0, 0.0));
        assert!(!Comparison::Above.holds(1.0, 1.0, 0.0));
    }

    #[test]
    fn algebraic_suites_pass() {
        let report = quick(&[Suite::FixedPoints, Suite::Eigen, Suite::SingularPower]);
        assert!(report.pass, "{:#?}", report.records);
        assert_eq!(report.records.len(), 7 + 7 + 3);
    }

    #[test]
    fn failures_are_recorded_not_raised() {
        let config = VerifyConfig {
            suites: vec![Suite::SingularPower],
            q_list: Some(vec![5.0]),
            ..VerifyConfig::default()
        };
        let (report, _) = Verifier::new(config, BetaStarCache::in_memory()).run();
        assert!(!report.pass);
        assert!(report
            .records
            .iter()
            .all(|r| r.measured.is_none() || !r.pass));
        assert!(report.records[0].detail.contains("outside"));
    }

    #[test]
    fn config_validation() {
        let bad = VerifyConfig {
            q_list: Some(vec![0.9]),
            ..VerifyConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(VerifyConfig::default().validate().is_ok());
    }

    #[test]
    fn report_roundtrip() {
        let report = quick(&[Suite::Eigen]);
        let back: VerifyReport =
            serde_json::from_str(&serde_json::to_string(&report).unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
