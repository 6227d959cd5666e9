//! Closed-form constants and the aggregated report.

use crate::error::{Error, Result};
use crate::maps::HyperbolicityData;
use serde::{Deserialize, Serialize};

/// Slack subtracted before every ceiling so exact powers do not round up.
pub const CEIL_SLACK: f64 = 1e-12;

fn ceil_slack(v: f64) -> f64 {
    (v - CEIL_SLACK).ceil()
}

/// `K = c / (1 − λ/μ)`; `μ = 1` is the limiting case `c/(1−λ)`.
pub fn adapted_metric_constant(c: f64, lambda: f64, mu: f64) -> Result<f64> {
    if !(lambda >= 0.0 && lambda < mu && mu <= 1.0) {
        return Err(Error::domain(format!("need 0 <= lambda < mu <= 1, got lambda={lambda}, mu={mu}")));
    }
    if c < 1.0 {
        return Err(Error::domain("c must be >= 1"));
    }
    Ok(c / (1.0 - lambda / mu))
}

/// `arcsin(1/K)`.
pub fn angle_lower_bound(k: f64) -> Result<f64> {
    if !(k >= 1.0) {
        return Err(Error::domain(format!("K must be >= 1, got {k}")));
    }
    Ok((1.0 / k).asin())
}

/// `β·log(1/λ) / (log L + β·log(1/λ))`. The unstable exponent is the same
/// expression evaluated at `‖Df⁻¹‖∞`.
pub fn holder_exponent_stable(beta: f64, lambda: f64, l: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 1.0) || !(lambda > 0.0 && lambda < 1.0) || !(l >= 1.0) {
        return Err(Error::domain(format!(
            "need 0 < beta <= 1, 0 < lambda < 1, L >= 1 (got {beta}, {lambda}, {l})"
        )));
    }
    let g = beta * (1.0 / lambda).ln();
    Ok(g / (l.ln() + g))
}

pub fn holder_exponent_unstable(beta: f64, lambda: f64, l_inv: f64) -> Result<f64> {
    holder_exponent_stable(beta, lambda, l_inv)
}

/// `ε₀ = (1−λ)² / (4 C₀)`.
pub fn manifold_size(lambda: f64, c0: f64) -> Result<f64> {
    if !(c0 > 0.0) {
        return Err(Error::domain("C0 must be positive"));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::domain("lambda must lie in (0,1)"));
    }
    Ok((1.0 - lambda).powi(2) / (4.0 * c0))
}

/// `θ = λ / (1 − λ C₁ δ (K+1))`, valid under `λ C₁ δ (K+1) < 1 − λ`.
pub fn graph_contraction_rate(lambda: f64, c1: f64, delta: f64, k_lip: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) || delta < 0.0 || c1 < 0.0 || k_lip < 0.0 {
        return Err(Error::domain("graph contraction inputs out of range"));
    }
    let lhs = lambda * c1 * delta * (k_lip + 1.0);
    let rhs = 1.0 - lambda;
    if !(lhs < rhs) {
        return Err(Error::Smallness { lhs, rhs });
    }
    Ok(lambda / (1.0 - lhs))
}

/// Rate `λ' = (5λ + 3)/8` used for leafwise contraction before the metric is
/// re-adapted.
pub fn leafwise_rate(lambda: f64) -> f64 {
    (5.0 * lambda + 3.0) / 8.0
}

/// `α = (1−λ) β / C`.
pub fn shadowing_tolerance(c: f64, lambda: f64, beta: f64) -> Result<f64> {
    if !(c > 0.0) || !(lambda > 0.0 && lambda <= 1.0) || !(beta > 0.0) {
        return Err(Error::domain("need C > 0, 0 < lambda < 1, beta > 0"));
    }
    Ok((1.0 - lambda) * beta / c)
}

/// Inverse of [`shadowing_tolerance`]: `β = C α / (1−λ)`.
pub fn shadowing_accuracy(c: f64, lambda: f64, alpha: f64) -> f64 {
    c * alpha / (1.0 - lambda)
}

/// `⌈log(ε/δ)/log(1/λ) + C⌉`.
pub fn expansiveness_horizon(eps: f64, delta: f64, lambda: f64, c: f64) -> Result<u64> {
    if !(delta > 0.0 && delta < eps) {
        return Err(Error::domain(format!("need 0 < delta < eps, got delta={delta}, eps={eps}")));
    }
    if !(lambda > 0.0 && lambda < 1.0) || c < 0.0 {
        return Err(Error::domain("need 0 < lambda < 1 and C >= 0"));
    }
    let v = (eps / delta).ln() / (1.0 / lambda).ln() + c;
    Ok(ceil_slack(v).max(0.0) as u64)
}

/// Smallest `N ≥ 0` with `C λᴺ diam(R) ≤ target`.
pub fn coding_truncation_depth(c: f64, lambda: f64, diam_r: f64, target: f64) -> Result<u64> {
    if !(c > 0.0 && diam_r > 0.0 && target > 0.0) || !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::domain("coding depth inputs must be positive with lambda < 1"));
    }
    let v = (c * diam_r / target).ln() / (1.0 / lambda).ln();
    let mut n = ceil_slack(v).max(0.0) as u64;
    // Guard the log estimate against rounding in either direction.
    let holds = |n: u64| c * lambda.powi(n as i32) * diam_r <= target * (1.0 + CEIL_SLACK);
    while !holds(n) {
        n += 1;
    }
    while n > 0 && holds(n - 1) {
        n -= 1;
    }
    Ok(n)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridResolution {
    pub k: u32,
    pub rectangle_count: u64,
    /// True when `k` was raised to the coarsest admissible value 1.
    pub clamped: bool,
}

/// Refinement depth for coding accuracy `δ` on a model with contraction `λ`,
/// shadowing constant `C`, `symbols` base rectangles and base diameter
/// `diam0`: the rectangle diameter must satisfy `diam ≤ (1−λ)δ/C`.
pub fn grid_resolution(
    delta: f64,
    lambda: f64,
    c: f64,
    symbols: u32,
    diam0: f64,
) -> Result<GridResolution> {
    if !(delta > 0.0) || !(lambda > 0.0 && lambda < 1.0) || !(c > 0.0) || !(diam0 > 0.0) {
        return Err(Error::domain("grid resolution inputs out of range"));
    }
    let bound = (1.0 - lambda) * delta / c;
    let v = (diam0 / bound).ln() / (1.0 / lambda).ln();
    let raw = ceil_slack(v).max(0.0) as u32;
    let k = raw.max(1);
    let rectangle_count = (symbols as u64).checked_pow(k).ok_or(Error::Overflow)?;
    Ok(GridResolution {
        k,
        rectangle_count,
        clamped: raw < 1,
    })
}

/// The horseshoe instance: `λ = 1/3`, `C = 3/2`, two symbols, unit diameter,
/// so the bound is `diam ≤ 4δ/9`.
pub fn grid_resolution_for_accuracy(delta: f64) -> Result<GridResolution> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::domain("delta must lie in (0,1]"));
    }
    grid_resolution(delta, 1.0 / 3.0, 1.5, 2, 1.0)
}

/// Targets at which the scale-dependent constants are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportTargets {
    pub delta_coding: f64,
    pub eps_expansive: f64,
    pub delta_expansive: f64,
    pub expansive_offset: f64,
    pub graph_delta: f64,
    pub beta: f64,
    pub shadow_constant: f64,
    pub partition_diameter: f64,
    pub symbols: u32,
}

impl Default for ReportTargets {
    fn default() -> Self {
        Self {
            delta_coding: 1e-6,
            eps_expansive: 0.1,
            delta_expansive: 1e-3,
            expansive_offset: 0.0,
            graph_delta: 0.1,
            beta: 1.0,
            shadow_constant: 1.5,
            partition_diameter: 1.0,
            symbols: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    #[serde(rename = "K_adapted")]
    pub k_adapted: f64,
    /// `K` at the midpoint of the open interval `(λ, 1)`, reported alongside
    /// the `μ = 1` value when the latter is used.
    #[serde(rename = "K_adapted_interior")]
    pub k_adapted_interior: f64,
    pub mu_interior: f64,
    /// True when `μ = 1` (the limiting convention) was used for `K_adapted`.
    pub mu_limit_convention: bool,
    pub angle_bound_rad: f64,
    pub alpha_s: f64,
    pub alpha_u: f64,
    pub eps0: f64,
    pub c0_clamped: bool,
    pub c0_used: f64,
    pub theta: f64,
    pub lambda_prime: f64,
    pub alpha_shadow: f64,
    pub alpha_over_beta: f64,
    #[serde(rename = "N_expansive")]
    pub n_expansive: u64,
    #[serde(rename = "N_coding")]
    pub n_coding: u64,
    pub k_grid: u32,
    pub rectangle_count: u64,
    #[serde(flatten)]
    pub inputs: HyperbolicityData,
    #[serde(flatten)]
    pub targets: ReportTargets,
}

/// Evaluates every constant for `data` at the given targets.
pub fn build_report(data: &HyperbolicityData, targets: &ReportTargets) -> Result<ConstantsReport> {
    data.validate()?;
    let t = targets;
    let k_adapted =
        adapted_metric_constant(data.c, data.lambda, data.mu_adapt).map_err(|e| e.tagged("K_adapted"))?;
    let mu_interior = 0.5 * (data.lambda + 1.0);
    let k_adapted_interior = adapted_metric_constant(data.c, data.lambda, mu_interior)
        .map_err(|e| e.tagged("K_adapted_interior"))?;
    let angle_bound_rad = angle_lower_bound(k_adapted).map_err(|e| e.tagged("angle_bound_rad"))?;
    let alpha_s = holder_exponent_stable(data.beta_holder, data.lambda, data.l)
        .map_err(|e| e.tagged("alpha_s"))?;
    let alpha_u = holder_exponent_unstable(data.beta_holder, data.lambda, data.l_inv)
        .map_err(|e| e.tagged("alpha_u"))?;
    let (c0_used, c0_clamped) = data.effective_c0();
    let eps0 = manifold_size(data.lambda, c0_used).map_err(|e| e.tagged("eps0"))?;
    let theta = graph_contraction_rate(data.lambda, data.c1, t.graph_delta, data.k_lip)
        .map_err(|e| e.tagged("theta"))?;
    let alpha_shadow = shadowing_tolerance(t.shadow_constant, data.lambda, t.beta)
        .map_err(|e| e.tagged("alpha_shadow"))?;
    let alpha_over_beta = shadowing_tolerance(t.shadow_constant, data.lambda, 1.0)
        .map_err(|e| e.tagged("alpha_shadow"))?;
    let n_expansive =
        expansiveness_horizon(t.eps_expansive, t.delta_expansive, data.lambda, t.expansive_offset)
            .map_err(|e| e.tagged("N_expansive"))?;
    let n_coding =
        coding_truncation_depth(t.shadow_constant, data.lambda, t.partition_diameter, t.delta_coding)
            .map_err(|e| e.tagged("N_coding"))?;
    let grid = grid_resolution(
        t.delta_coding,
        data.lambda,
        t.shadow_constant,
        t.symbols,
        t.partition_diameter,
    )
    .map_err(|e| e.tagged("k_grid"))?;
    Ok(ConstantsReport {
        k_adapted,
        k_adapted_interior,
        mu_interior,
        mu_limit_convention: data.mu_adapt == 1.0,
        angle_bound_rad,
        alpha_s,
        alpha_u,
        eps0,
        c0_clamped,
        c0_used,
        theta,
        lambda_prime: leafwise_rate(data.lambda),
        alpha_shadow,
        alpha_over_beta,
        n_expansive,
        n_coding,
        k_grid: grid.k,
        rectangle_count: grid.rectangle_count,
        inputs: *data,
        targets: *t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn adapted_metric_examples() {
        assert!(close(adapted_metric_constant(1.0, 1.0 / 3.0, 1.0).unwrap(), 1.5, 4e-16));
        assert!(close(adapted_metric_constant(1.0, 1.0 / 3.0, 2.0 / 3.0).unwrap(), 2.0, 1e-15));
        assert_eq!(adapted_metric_constant(1.0, 0.0, 1.0).unwrap(), 1.0);
        assert!(adapted_metric_constant(1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn angle_examples() {
        assert!(close(angle_lower_bound(1.0).unwrap(), PI / 2.0, 1e-15));
        assert!(close(angle_lower_bound(1.5).unwrap(), (2.0f64 / 3.0).asin(), 1e-15));
        assert!(close(angle_lower_bound(1.5).unwrap(), 0.7297, 1e-4));
        assert!(close(angle_lower_bound(2.0).unwrap(), PI / 6.0, 1e-15));
        assert!(angle_lower_bound(0.9).is_err());
    }

    #[test]
    fn holder_examples() {
        assert!(close(holder_exponent_stable(1.0, 1.0 / 3.0, 3.0).unwrap(), 0.5, 1e-15));
        assert_eq!(holder_exponent_stable(1.0, 1.0 / 3.0, 1.0).unwrap(), 1.0);
        assert!(close(holder_exponent_stable(0.5, 1.0 / 3.0, 3.0).unwrap(), 1.0 / 3.0, 1e-15));
        assert!(holder_exponent_stable(1.5, 0.3, 3.0).is_err());
    }

    #[test]
    fn manifold_size_examples() {
        assert!(close(manifold_size(1.0 / 3.0, 1.0).unwrap(), 1.0 / 9.0, 1e-16));
        assert!(close(manifold_size(1.0 / 3.0, 1e-3).unwrap(), 1000.0 / 9.0, 1e-10));
        assert_eq!(manifold_size(1.0, 0.5).unwrap(), 0.0);
        assert!(manifold_size(0.3, 0.0).is_err());
    }

    #[test]
    fn theta_examples() {
        let t = graph_contraction_rate(1.0 / 3.0, 1.0, 0.1, 0.5).unwrap();
        assert!(close(t, (1.0 / 3.0) / 0.95, 1e-15));
        assert!(close(t, 0.35088, 1e-5));
        assert!(close(graph_contraction_rate(1.0 / 3.0, 7.0, 0.0, 0.5).unwrap(), 1.0 / 3.0, 1e-16));
        assert!(matches!(
            graph_contraction_rate(1.0 / 3.0, 1.0, 2.0, 0.5),
            Err(Error::Smallness { .. })
        ));
    }

    #[test]
    fn shadowing_examples() {
        assert!(close(shadowing_tolerance(1.5, 1.0 / 3.0, 1.0).unwrap(), 4.0 / 9.0, 1e-15));
        assert!(close(shadowing_tolerance(1.5, 1.0 / 3.0, 0.01).unwrap(), 0.004444, 1e-6));
        assert_eq!(shadowing_tolerance(1.5, 1.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn expansiveness_examples() {
        assert_eq!(expansiveness_horizon(0.1, 0.001, 1.0 / 3.0, 0.0).unwrap(), 5);
        let lambda = 0.3;
        let delta = 0.01;
        assert_eq!(expansiveness_horizon(delta / lambda, delta, lambda, 0.0).unwrap(), 1);
        assert_eq!(expansiveness_horizon(0.1, 1e-6, 1.0 / 3.0, 2.0).unwrap(), 13);
        assert!(expansiveness_horizon(0.1, 0.1, 0.5, 0.0).is_err());
    }

    #[test]
    fn coding_depth_examples() {
        assert_eq!(coding_truncation_depth(1.0, 1.0 / 3.0, 1.0, 1e-6).unwrap(), 13);
        assert_eq!(coding_truncation_depth(1.0, 1.0 / 3.0, 1.0, 1.0).unwrap(), 0);
        assert_eq!(coding_truncation_depth(2.0, 0.5, 0.5, 1e-3).unwrap(), 10);
    }

    #[test]
    fn grid_examples() {
        let g = grid_resolution_for_accuracy(1e-6).unwrap();
        assert_eq!((g.k, g.rectangle_count), (14, 16384));
        let g = grid_resolution_for_accuracy(1e-3).unwrap();
        assert_eq!((g.k, g.rectangle_count), (8, 256));
        // diam ≤ 4δ/9 = 16/81 needs 3^{-k} ≤ 16/81, i.e. k = 2.
        let g = grid_resolution_for_accuracy(4.0 / 9.0).unwrap();
        assert_eq!((g.k, g.rectangle_count, g.clamped), (2, 4, false));
        let g = grid_resolution_for_accuracy(1.0).unwrap();
        assert_eq!((g.k, g.clamped), (1, false));
        let g = grid_resolution(3.0, 1.0 / 3.0, 1.5, 2, 1.0).unwrap();
        assert_eq!((g.k, g.rectangle_count, g.clamped), (1, 2, true));
    }

    #[test]
    fn horseshoe_report() {
        let r = build_report(&HyperbolicityData::horseshoe(), &ReportTargets::default()).unwrap();
        assert!(close(r.k_adapted, 1.5, 4e-16));
        assert!(close(r.alpha_over_beta, 4.0 / 9.0, 1e-16));
        assert_eq!((r.k_grid, r.rectangle_count), (14, 16384));
        assert!(r.mu_limit_convention && r.c0_clamped);
        assert!(r.k_adapted_interior > r.k_adapted);
        assert_eq!(r.n_coding, 13);
    }

    #[test]
    fn cat_map_report_has_balanced_exponents() {
        let rho = (3.0 + 5f64.sqrt()) / 2.0;
        let r = build_report(&HyperbolicityData::toral(rho), &ReportTargets::default()).unwrap();
        assert!(close(r.alpha_s, 0.5, 1e-15));
        assert!(close(r.alpha_u, 0.5, 1e-15));
    }

    #[test]
    fn smallness_failure_is_tagged() {
        let t = ReportTargets {
            graph_delta: 5.0,
            ..Default::default()
        };
        let e = build_report(&HyperbolicityData::horseshoe(), &t).unwrap_err();
        assert!(matches!(e, Error::Formula { formula: "theta", .. }));
    }

    #[test]
    fn report_roundtrips_bit_exactly() {
        let r = build_report(&HyperbolicityData::horseshoe(), &ReportTargets::default()).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let back: ConstantsReport = serde_json::from_str(&s).unwrap();
        assert_eq!(r, back);
        assert_eq!(r.theta.to_bits(), back.theta.to_bits());
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        for key in [
            "K_adapted",
            "angle_bound_rad",
            "alpha_s",
            "alpha_u",
            "eps0",
            "theta",
            "alpha_shadow",
            "N_expansive",
            "N_coding",
            "k_grid",
            "rectangle_count",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v.as_object().unwrap().values().all(|x| !x.is_object()));
    }
}
