//! Local stable and unstable manifolds by the backward graph transform, and
//! the bracket `[x, y] = W^s(x) ∩ W^u(y)`.

use crate::constants::{graph_contraction_rate, leafwise_rate};
use crate::error::{Error, Result};
use crate::geometry::{Mat2, Point2, Vec2};
use crate::maps::{splitting, Direction, SplittingFrame, SystemModel};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Tolerances and caps of the graph-transform iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldConfig {
    pub nodes: usize,
    pub inner_tol: f64,
    pub inner_max: usize,
    pub outer_tol: f64,
    pub outer_max: usize,
    /// Additive slack on `θ` before a step ratio counts as non-contracting.
    pub ratio_slack: f64,
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        Self {
            nodes: 257,
            inner_tol: 1e-13,
            inner_max: 200,
            outer_tol: 1e-11,
            outer_max: 500,
            ratio_slack: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Stable,
    Unstable,
}

impl ManifoldKind {
    fn direction(self) -> Direction {
        match self {
            ManifoldKind::Stable => Direction::Forward,
            ManifoldKind::Unstable => Direction::Backward,
        }
    }
}

/// Local coordinates `(s, u) ↦ base + s·e_s + u·e_u` on `[-δ, δ]²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chart {
    pub base: Point2,
    pub frame: SplittingFrame,
    pub delta: f64,
}

impl Chart {
    pub fn new(base: Point2, frame: SplittingFrame, delta: f64) -> Self {
        Self {
            base,
            frame: frame.rebased(base),
            delta,
        }
    }

    /// Chart aligned with the (exact or estimated) splitting at `base`.
    pub fn eigen(model: &SystemModel, base: &Point2, delta: f64) -> Result<Self> {
        Ok(Self::new(*base, splitting(model, base)?, delta))
    }

    /// Chart along the coordinate axes, each axis assigned to the splitting
    /// direction it is closest to.
    pub fn axis(model: &SystemModel, base: &Point2, delta: f64) -> Result<Self> {
        let f = splitting(model, base)?;
        let (ex, ey) = (Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0));
        let (s, u) = if f.e_s.y.abs() > f.e_s.x.abs() {
            (ey, ex)
        } else {
            (ex, ey)
        };
        Ok(Self::new(*base, SplittingFrame::new(*base, s, u)?, delta))
    }

    pub fn to_ambient(&self, s: f64, u: f64) -> Point2 {
        self.base
            .translate(self.frame.e_s * s + self.frame.e_u * u)
    }

    pub fn to_chart(&self, p: &Point2) -> (f64, f64) {
        let d = self.base.displacement_to(p);
        let v = self
            .frame
            .basis()
            .inverse()
            .expect("splitting frames are non-degenerate")
            .apply(d);
        (v.x, v.y)
    }

    pub fn rebased(&self, base: Point2) -> Self {
        Self::new(base, self.frame, self.delta)
    }

    fn swapped(&self) -> Self {
        Self {
            frame: self.frame.swapped(),
            ..*self
        }
    }
}

/// Graph `u = φ(s)` sampled on a uniform grid over `[-δ, δ]`. For unstable
/// graphs the chart frame is swapped, so `s` runs along `E^u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphFunction {
    pub chart: Chart,
    pub kind: ManifoldKind,
    pub samples: Vec<f64>,
    pub lip_bound: f64,
    /// Set when some evaluation needed a clamped value outside `[-δ, δ]`.
    pub out_of_chart: bool,
}

impl GraphFunction {
    pub fn zero(chart: Chart, kind: ManifoldKind, nodes: usize) -> Self {
        Self {
            chart,
            kind,
            samples: vec![0.0; nodes.max(2)],
            lip_bound: 0.0,
            out_of_chart: false,
        }
    }

    pub fn nodes(&self) -> usize {
        self.samples.len()
    }

    pub fn delta(&self) -> f64 {
        self.chart.delta
    }

    pub fn s_at(&self, i: usize) -> f64 {
        let n = self.samples.len() - 1;
        let d = self.chart.delta;
        -d + 2.0 * d * i as f64 / n as f64
    }

    /// Linear interpolation; arguments outside the chart are clamped and the
    /// second component reports whether clamping happened.
    pub fn eval_flagged(&self, s: f64) -> (f64, bool) {
        let d = self.chart.delta;
        let n = self.samples.len() - 1;
        let outside = s.abs() > d * (1.0 + 1e-12);
        let sc = s.clamp(-d, d);
        let t = (sc + d) / (2.0 * d) * n as f64;
        let i = (t.floor() as usize).min(n - 1);
        let w = t - i as f64;
        (
            self.samples[i] * (1.0 - w) + self.samples[i + 1] * w,
            outside,
        )
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.eval_flagged(s).0
    }

    /// Slope of the interpolant's segment containing `s`.
    pub fn slope(&self, s: f64) -> f64 {
        let d = self.chart.delta;
        let n = self.samples.len() - 1;
        let t = (s.clamp(-d, d) + d) / (2.0 * d) * n as f64;
        let i = (t.floor() as usize).min(n - 1);
        (self.samples[i + 1] - self.samples[i]) / (2.0 * d / n as f64)
    }

    /// Ambient point `(s, φ(s))`.
    pub fn ambient(&self, s: f64) -> Point2 {
        self.chart.to_ambient(s, self.eval(s))
    }

    pub fn sup_distance(&self, o: &GraphFunction) -> f64 {
        self.samples
            .iter()
            .zip(&o.samples)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn empirical_lipschitz(&self) -> f64 {
        let h = 2.0 * self.chart.delta / (self.samples.len() - 1) as f64;
        self.samples
            .windows(2)
            .fold(0.0f64, |m, w| m.max((w[1] - w[0]).abs() / h))
    }

    /// Whether the graph lies in the space of `K`-Lipschitz graphs through
    /// the base point with values in `[-δ, δ]`.
    pub fn in_graph_space(&self, k_lip: f64) -> bool {
        let mid = self.samples.len() / 2;
        self.samples[mid].abs() <= 1e-12
            && self.lip_bound <= k_lip + 1e-12
            && self.samples.iter().all(|u| u.abs() <= self.chart.delta)
    }

    pub fn rebased(&self, base: Point2) -> Self {
        Self {
            chart: self.chart.rebased(base),
            ..self.clone()
        }
    }

    /// `(s, u, ambient)` for every node.
    pub fn table(&self) -> Vec<(f64, f64, Point2)> {
        (0..self.samples.len())
            .map(|i| {
                let s = self.s_at(i);
                let u = self.samples[i];
                (s, u, self.chart.to_ambient(s, u))
            })
            .collect()
    }
}

/// Chart-local expression of `f` (or `f⁻¹`) from the chart at `src` to the
/// chart at `dst`.
struct LocalMap<'a> {
    model: &'a SystemModel,
    src: Chart,
    dst: Chart,
    dir: Direction,
    /// `∂G_u/∂u` of the linear part at the base.
    b: f64,
}

impl<'a> LocalMap<'a> {
    fn new(model: &'a SystemModel, src: Chart, dst: Chart, dir: Direction) -> Result<Self> {
        let jac = model.jacobian_near(&src.base, &src.base, dir)?;
        let m = dst
            .frame
            .basis()
            .inverse()
            .ok_or_else(|| Error::domain("singular chart frame"))?
            .mul(&jac)
            .mul(&src.frame.basis());
        if m.d.abs() < 1e-300 {
            return Err(Error::domain("chart map has no unstable block"));
        }
        Ok(Self {
            model,
            src,
            dst,
            dir,
            b: m.d,
        })
    }

    fn eval(&self, s: f64, u: f64) -> Result<(f64, f64)> {
        let p = self.src.to_ambient(s, u);
        let q = self.model.step_near(&self.src.base, &p, self.dir)?;
        Ok(self.dst.to_chart(&q))
    }
}

/// One application of `Γ⁻¹`: given `phi` in the chart at the image of
/// `chart.base`, returns the pulled-back graph in `chart`.
///
/// For each node `s` the equation `φ(G_s(s,u)) = G_u(s,u)` is solved by
/// `u ← u + [φ(G_s(s,u)) − G_u(s,u)] / B`, which is the iteration
/// `u ← B⁻¹[φ(As + a) − b]` written in terms of the full chart map.
pub fn backward_graph_step(
    model: &SystemModel,
    phi: &GraphFunction,
    chart: &Chart,
    cfg: &ManifoldConfig,
) -> Result<GraphFunction> {
    let dir = phi.kind.direction();
    let local = LocalMap::new(model, *chart, phi.chart, dir)?;
    let n = phi.nodes();
    let mut out = GraphFunction::zero(*chart, phi.kind, n);
    let mut any_outside = false;
    for i in 0..n {
        let s = out.s_at(i);
        let mut u = phi.eval(s).clamp(-chart.delta, chart.delta);
        let mut prev_change = f64::INFINITY;
        let mut non_decreasing = 0usize;
        let mut outside = false;
        for _ in 0..cfg.inner_max {
            let (s1, u1) = local.eval(s, u)?;
            let (target, out_flag) = phi.eval_flagged(s1);
            outside = out_flag;
            let next = u + (target - u1) / local.b;
            let change = (next - u).abs();
            if !next.is_finite() {
                return Err(Error::InnerDivergence { node: i, s });
            }
            u = next;
            if change <= cfg.inner_tol {
                break;
            }
            if change >= prev_change {
                non_decreasing += 1;
                if non_decreasing >= 5 {
                    return Err(Error::InnerDivergence { node: i, s });
                }
            } else {
                non_decreasing = 0;
            }
            prev_change = change;
        }
        any_outside |= outside;
        out.samples[i] = u;
    }
    out.out_of_chart = any_outside;
    out.lip_bound = out.empirical_lipschitz();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldResult {
    pub graph: GraphFunction,
    pub iterations: usize,
    pub step_changes: Vec<f64>,
    pub step_ratios: Vec<f64>,
    /// Ledger contraction rate at the chart size, when the smallness
    /// condition holds.
    pub theta: Option<f64>,
    /// Rate the iteration is checked against.
    pub theta_check: f64,
    /// `log(tol/δ)/log θ`.
    pub predicted_iterations: f64,
    pub converged: bool,
}

impl ManifoldResult {
    pub fn max_ratio(&self) -> f64 {
        self.step_ratios.iter().cloned().fold(0.0, f64::max)
    }
}

fn contraction_rates(model: &SystemModel, delta: f64) -> Result<(Option<f64>, f64)> {
    let d = &model.data;
    match graph_contraction_rate(d.lambda, d.c1, delta, d.k_lip) {
        Ok(t) => Ok((Some(t), t)),
        // Affine and linear models have no nonlinear terms, so the smallness
        // condition holds with C1 = 0 and the rate is λ.
        Err(Error::Smallness { .. }) if model.has_constant_derivative() => Ok((None, d.lambda)),
        Err(e) => Err(e),
    }
}

/// Fixed point of `Γ⁻¹` in `chart` (stable) or in its swapped version
/// (unstable), starting from the zero graph.
pub fn manifold_in_chart(
    model: &SystemModel,
    chart: &Chart,
    kind: ManifoldKind,
    cfg: &ManifoldConfig,
) -> Result<ManifoldResult> {
    let chart = match kind {
        ManifoldKind::Stable => *chart,
        ManifoldKind::Unstable => chart.swapped(),
    };
    let (theta, theta_check) = contraction_rates(model, chart.delta)?;
    let predicted_iterations = (cfg.outer_tol / chart.delta).ln() / theta_check.ln();
    let x = chart.base;
    let y = model.step(&x, kind.direction())?;
    let uniform = model.has_constant_derivative() || x.distance(&y) <= 1e-14;
    if uniform {
        iterate_uniform(model, chart, y, kind, cfg, theta, theta_check, predicted_iterations)
    } else {
        pull_back_along_orbit(model, chart, kind, cfg, theta, theta_check, predicted_iterations)
    }
}

#[allow(clippy::too_many_arguments)]
fn iterate_uniform(
    model: &SystemModel,
    chart: Chart,
    image: Point2,
    kind: ManifoldKind,
    cfg: &ManifoldConfig,
    theta: Option<f64>,
    theta_check: f64,
    predicted_iterations: f64,
) -> Result<ManifoldResult> {
    let mut phi = GraphFunction::zero(chart, kind, cfg.nodes);
    let mut changes = Vec::new();
    let mut ratios = Vec::new();
    let mut over = 0usize;
    let noise_floor = 1e3 * cfg.inner_tol;
    for it in 1..=cfg.outer_max {
        let target = phi.rebased(image);
        let next = backward_graph_step(model, &target, &chart, cfg)?;
        let change = next.sup_distance(&phi);
        if let Some(&prev) = changes.last() {
            if prev > noise_floor {
                let r: f64 = change / prev;
                ratios.push(r);
                if r > theta_check + cfg.ratio_slack {
                    over += 1;
                    if over >= 3 {
                        return Err(Error::NonContraction {
                            observed: r,
                            bound: theta_check + cfg.ratio_slack,
                        });
                    }
                } else {
                    over = 0;
                }
            }
        }
        changes.push(change);
        phi = next;
        if change <= cfg.outer_tol {
            return Ok(ManifoldResult {
                graph: phi,
                iterations: it,
                step_changes: changes,
                step_ratios: ratios,
                theta,
                theta_check,
                predicted_iterations,
                converged: true,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.outer_max,
        change: *changes.last().unwrap_or(&f64::NAN),
    })
}

/// General base points: charts along the orbit, zero graph at depth `n`
/// pulled back to the base. Depths `n` and `n + 1` are compared.
fn pull_back_along_orbit(
    model: &SystemModel,
    chart: Chart,
    kind: ManifoldKind,
    cfg: &ManifoldConfig,
    theta: Option<f64>,
    theta_check: f64,
    predicted_iterations: f64,
) -> Result<ManifoldResult> {
    let dir = kind.direction();
    let depth = (predicted_iterations.ceil().max(1.0) as usize + 2).min(cfg.outer_max);
    let mut charts = vec![chart];
    let mut p = chart.base;
    for _ in 0..=depth {
        p = model.step(&p, dir)?;
        let fr = splitting(model, &p)?;
        let fr = match kind {
            ManifoldKind::Stable => fr,
            ManifoldKind::Unstable => fr.swapped(),
        };
        charts.push(Chart::new(p, fr, chart.delta));
    }
    let pull = |from: usize| -> Result<GraphFunction> {
        let mut g = GraphFunction::zero(charts[from], kind, cfg.nodes);
        for k in (0..from).rev() {
            g = backward_graph_step(model, &g, &charts[k], cfg)?;
        }
        Ok(g)
    };
    let a = pull(depth)?;
    let b = pull(depth + 1)?;
    let change = a.sup_distance(&b);
    Ok(ManifoldResult {
        graph: b,
        iterations: depth + 1,
        step_changes: vec![change],
        step_ratios: Vec::new(),
        theta,
        theta_check,
        predicted_iterations,
        converged: change <= cfg.outer_tol,
    })
}

/// `W^s_δ(x)` in the splitting-aligned chart.
pub fn local_stable_manifold(
    model: &SystemModel,
    x: &Point2,
    delta: f64,
    tol: f64,
) -> Result<ManifoldResult> {
    let cfg = ManifoldConfig {
        outer_tol: tol,
        ..Default::default()
    };
    manifold_in_chart(model, &Chart::eigen(model, x, delta)?, ManifoldKind::Stable, &cfg)
}

/// `W^u_δ(x)`: the same engine run on `f⁻¹` with the frame swapped.
pub fn local_unstable_manifold(
    model: &SystemModel,
    x: &Point2,
    delta: f64,
    tol: f64,
) -> Result<ManifoldResult> {
    let cfg = ManifoldConfig {
        outer_tol: tol,
        ..Default::default()
    };
    manifold_in_chart(model, &Chart::eigen(model, x, delta)?, ManifoldKind::Unstable, &cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BracketResult {
    pub point: Point2,
    pub dist_to_x: f64,
    pub dist_to_y: f64,
    pub iterations: usize,
}

/// Local product structure: brackets computed from cached or on-demand
/// manifold graphs.
#[derive(Debug)]
pub struct ProductStructure<'a> {
    model: &'a SystemModel,
    chart_delta: f64,
    cfg: ManifoldConfig,
    cache: OnceLock<(GraphFunction, GraphFunction)>,
}

impl<'a> ProductStructure<'a> {
    /// Charts of half-width `C₁·δ₀`, large enough to contain the bracket of
    /// any pair closer than `δ₀`.
    pub fn new(model: &'a SystemModel) -> Self {
        let d = model.data.bracket_constant() * model.data.delta0;
        Self::with_chart_delta(model, d)
    }

    pub fn with_chart_delta(model: &'a SystemModel, chart_delta: f64) -> Self {
        Self {
            model,
            chart_delta,
            cfg: ManifoldConfig::default(),
            cache: OnceLock::new(),
        }
    }

    pub fn model(&self) -> &SystemModel {
        self.model
    }

    pub fn chart_delta(&self) -> f64 {
        self.chart_delta
    }

    /// Built at the origin so the cached graphs do not depend on which
    /// caller arrived first.
    fn uniform_graphs(&self) -> Result<&(GraphFunction, GraphFunction)> {
        if let Some(g) = self.cache.get() {
            return Ok(g);
        }
        let chart = Chart::eigen(self.model, &self.model.point(0.0, 0.0), self.chart_delta)?;
        let s = manifold_in_chart(self.model, &chart, ManifoldKind::Stable, &self.cfg)?;
        let u = manifold_in_chart(self.model, &chart, ManifoldKind::Unstable, &self.cfg)?;
        Ok(self.cache.get_or_init(|| (s.graph, u.graph)))
    }

    pub fn graph_at(&self, x: &Point2, kind: ManifoldKind) -> Result<GraphFunction> {
        if self.model.has_constant_derivative() {
            let (s, u) = self.uniform_graphs()?;
            let g = match kind {
                ManifoldKind::Stable => s,
                ManifoldKind::Unstable => u,
            };
            return Ok(g.rebased(*x));
        }
        let chart = Chart::eigen(self.model, x, self.chart_delta)?;
        Ok(manifold_in_chart(self.model, &chart, kind, &self.cfg)?.graph)
    }

    /// `[x, y] = W^s(x) ∩ W^u(y)` by alternating projection between the two
    /// graphs.
    pub fn bracket(&self, x: &Point2, y: &Point2) -> Result<BracketResult> {
        let dist = x.distance(y);
        let limit = self.model.data.delta0;
        if dist >= limit {
            return Err(Error::TooFar {
                distance: dist,
                limit,
            });
        }
        let phi = self.graph_at(x, ManifoldKind::Stable)?;
        let psi = self.graph_at(y, ManifoldKind::Unstable)?;
        let (dx, dy) = (phi.delta(), psi.delta());
        let mut t = 0.0;
        let mut point = *x;
        let mut iterations = 0;
        let tol = 1e-15 * dx.max(1.0);
        for it in 1..=200 {
            iterations = it;
            let q = psi.ambient(t);
            let (s_q, _) = phi.chart.to_chart(&q);
            if s_q.abs() > dx {
                return Err(Error::NoIntersection);
            }
            point = phi.ambient(s_q);
            let (t_new, _) = psi.chart.to_chart(&point);
            if t_new.abs() > dy {
                return Err(Error::NoIntersection);
            }
            let change = (t_new - t).abs();
            t = t_new;
            if change <= tol {
                break;
            }
            if it == 200 {
                return Err(Error::NoIntersection);
            }
        }
        Ok(BracketResult {
            point,
            dist_to_x: point.distance(x),
            dist_to_y: point.distance(y),
            iterations,
        })
    }
}

/// Bracket with manifold pieces of half-width `eps`.
pub fn bracket(model: &SystemModel, x: &Point2, y: &Point2, eps: f64) -> Result<BracketResult> {
    ProductStructure::with_chart_delta(model, eps).bracket(x, y)
}

/// `d(fᵏx, fᵏy)/d(x, y)` for `k = 0..=n`; all zeros when `y = x`.
pub fn pair_contraction(model: &SystemModel, x: &Point2, y: &Point2, n: usize) -> Result<Vec<f64>> {
    let d0 = x.distance(y);
    if d0 == 0.0 {
        return Ok(vec![0.0; n + 1]);
    }
    let (mut a, mut b) = (*x, *y);
    let mut out = vec![1.0];
    for _ in 0..n {
        a = model.forward(&a)?;
        b = model.forward(&b)?;
        out.push(a.distance(&b) / d0);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    /// Largest observed ratio per step `k = 0..=n`.
    pub max_ratio: Vec<f64>,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub within_lambda_prime: bool,
    pub samples_used: usize,
}

/// Samples points of the stable graph `phi` at `x`, iterates `n` steps and
/// compares `d(fᵏx, fᵏy)/d(x, y)` with `(λ')ᵏ`.
pub fn contraction_report(
    model: &SystemModel,
    x: &Point2,
    phi: &GraphFunction,
    n: usize,
) -> ContractionReport {
    let lambda = model.data.lambda;
    let lp = leafwise_rate(lambda);
    let mut max_ratio = vec![0.0f64; n + 1];
    let mut used = 0;
    let d = phi.delta();
    for frac in [-1.0, -0.75, -0.5, -0.25, 0.25, 0.5, 0.75, 1.0] {
        let y = phi.ambient(frac * d);
        if let Ok(r) = pair_contraction(model, x, &y, n) {
            used += 1;
            for (m, v) in max_ratio.iter_mut().zip(r) {
                *m = m.max(v);
            }
        }
    }
    let within = used > 0
        && max_ratio
            .iter()
            .enumerate()
            .all(|(k, r)| *r <= lp.powi(k as i32) * (1.0 + 1e-9));
    ContractionReport {
        max_ratio,
        lambda,
        lambda_prime: lp,
        within_lambda_prime: within,
        samples_used: used,
    }
}

/// Matrix of `f` in the frames of `src` and `dst`; useful for inspecting
/// chart-local linear parts.
pub fn chart_linear_part(model: &SystemModel, src: &Chart, dst: &Chart) -> Result<Mat2> {
    let jac = model.jacobian(&src.base)?;
    Ok(dst
        .frame
        .basis()
        .inverse()
        .ok_or_else(|| Error::domain("singular chart frame"))?
        .mul(&jac)
        .mul(&src.frame.basis()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{HyperbolicityData, UserGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn horseshoe_zero_graph_is_fixed() {
        let m = SystemModel::horseshoe();
        let x = Point2::plane(0.0, 0.0);
        let chart = Chart::eigen(&m, &x, 0.1).unwrap();
        let zero = GraphFunction::zero(chart, ManifoldKind::Stable, 257);
        let g = backward_graph_step(&m, &zero, &chart, &ManifoldConfig::default()).unwrap();
        assert_eq!(g.sup_distance(&zero), 0.0);
        let r = local_stable_manifold(&m, &x, 0.1, 1e-11).unwrap();
        assert!(r.graph.samples.iter().all(|u| *u == 0.0));
        for (_, _, p) in r.graph.table() {
            assert_eq!(p.y, 0.0);
        }
    }

    #[test]
    fn cat_eigen_chart_zero_graph_is_fixed() {
        let m = SystemModel::cat_map();
        let x = Point2::torus(0.0, 0.0);
        let chart = Chart::eigen(&m, &x, 0.05).unwrap();
        let zero = GraphFunction::zero(chart, ManifoldKind::Stable, 257);
        let g = backward_graph_step(&m, &zero, &chart, &ManifoldConfig::default()).unwrap();
        assert!(g.sup_distance(&zero) < 1e-15);
    }

    #[test]
    fn axis_chart_first_step_follows_slope_recursion() {
        let m = SystemModel::cat_map();
        let x = Point2::torus(0.0, 0.0);
        let chart = Chart::axis(&m, &x, 0.05).unwrap();
        // Stable axis is y, unstable axis is x: in (s, u) = (y, x) the map
        // is s' = s + u, u' = s + 2u, so u' = m's' pulls back to
        // u = (m' - 1)/(2 - m') s.
        assert_eq!(chart.frame.e_s, Vec2::new(0.0, 1.0));
        let next = |m: f64| (m - 1.0) / (2.0 - m);
        let zero = GraphFunction::zero(chart, ManifoldKind::Stable, 257);
        let cfg = ManifoldConfig::default();
        let g1 = backward_graph_step(&m, &zero, &chart, &cfg).unwrap();
        let m1 = next(0.0);
        for (s, u, _) in g1.table() {
            assert!((u - m1 * s).abs() < 1e-14);
        }
        let g2 = backward_graph_step(&m, &g1, &chart, &cfg).unwrap();
        let m2 = next(m1);
        for (s, u, _) in g2.table() {
            assert!((u - m2 * s).abs() < 1e-12);
        }
    }

    #[test]
    fn cat_axis_chart_converges_to_eigenline() {
        let m = SystemModel::cat_map();
        let x = Point2::torus(0.0, 0.0);
        let chart = Chart::axis(&m, &x, 0.05).unwrap();
        let r = manifold_in_chart(&m, &chart, ManifoldKind::Stable, &ManifoldConfig::default())
            .unwrap();
        assert!(r.converged);
        // Ambient slope of the stable eigenline is −φ.
        let err = r
            .graph
            .table()
            .iter()
            .map(|(s, u, _)| (u - s * (-1.0 / PHI)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "sup error {err}");
        let theta = r.theta.unwrap();
        assert!(r.max_ratio() <= theta + 0.05);
        assert!((r.iterations as f64) <= r.predicted_iterations.ceil() + 1.0);
    }

    #[test]
    fn unstable_manifold_of_cat_map_is_unstable_eigenline() {
        let m = SystemModel::cat_map();
        let x = Point2::torus(0.2, 0.3);
        let chart = Chart::axis(&m, &x, 0.05).unwrap();
        let r = manifold_in_chart(&m, &chart, ManifoldKind::Unstable, &ManifoldConfig::default())
            .unwrap();
        for (_, _, p) in r.graph.table() {
            let d = x.displacement_to(&p);
            if d.x.abs() > 1e-6 {
                assert!((d.y / d.x - (PHI - 1.0)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn tangency_in_eigen_chart() {
        let g = UserGrid::tabulate((-0.5, 0.5), (-0.5, 0.5), 401, 401, |x, y| {
            (0.5 * x, 2.0 * y + x * x)
        });
        let data = HyperbolicityData {
            lambda: 0.5,
            l: 2.0,
            l_inv: 2.0,
            delta0: 0.1,
            ..HyperbolicityData::horseshoe()
        };
        let m = SystemModel::user_grid(g, data).unwrap();
        let x = Point2::plane(0.0, 0.0);
        let r = local_stable_manifold(&m, &x, 0.2, 1e-11).unwrap();
        let phi = &r.graph;
        let h = 2.0 * phi.delta() / (phi.nodes() - 1) as f64;
        let slope0 = (phi.eval(h) - phi.eval(-h)) / (2.0 * h);
        assert!(slope0.abs() <= 1e-6);
        // Exact stable curve of (x/2, 2y + x²) is y = −(4/7)x².
        for (s, u, _) in phi.table() {
            assert!((u + 4.0 / 7.0 * s * s).abs() < 2e-5, "s={s} u={u}");
        }
        assert!(r.max_ratio() <= r.theta.unwrap() + 0.05);
    }

    #[test]
    fn fixed_point_residual_and_invariance() {
        let m = SystemModel::cat_map();
        let x = Point2::torus(0.0, 0.0);
        let chart = Chart::axis(&m, &x, 0.05).unwrap();
        let cfg = ManifoldConfig::default();
        let r = manifold_in_chart(&m, &chart, ManifoldKind::Stable, &cfg).unwrap();
        let again = backward_graph_step(&m, &r.graph, &chart, &cfg).unwrap();
        assert!(again.sup_distance(&r.graph) <= 2.0 * cfg.outer_tol);
        for (s, _, p) in r.graph.table() {
            if s.abs() > 0.3 * chart.delta {
                continue;
            }
            let q = m.forward(&p).unwrap();
            let (s1, u1) = r.graph.chart.to_chart(&q);
            assert!((u1 - r.graph.eval(s1)).abs() < 10.0 * cfg.outer_tol);
        }
    }

    #[test]
    fn horseshoe_bracket_swaps_coordinates() {
        let m = SystemModel::horseshoe();
        let ps = ProductStructure::new(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = m.sample_invariant_set(40, &mut rng);
        for w in pts.windows(2) {
            let (x, y) = (w[0], w[1]);
            let b = ps.bracket(&x, &y).unwrap();
            assert!((b.point.x - y.x).abs() < 1e-14 && (b.point.y - x.y).abs() < 1e-14);
        }
        let x = pts[0];
        let b = ps.bracket(&x, &x).unwrap();
        assert_eq!(b.dist_to_x, 0.0);
    }

    #[test]
    fn cat_bracket_matches_linear_solve() {
        let m = SystemModel::cat_map();
        let ps = ProductStructure::new(&m);
        let s5 = 5f64.sqrt();
        let es = Vec2::new(1.0, -PHI).normalized();
        let eu = Vec2::new(1.0, (s5 - 1.0) / 2.0).normalized();
        let basis = Mat2::from_columns(es, eu).inverse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let x = Point2::torus(rng.random(), rng.random());
            let y = x.translate(Vec2::new(
                0.09 * (2.0 * rng.random::<f64>() - 1.0),
                0.09 * (2.0 * rng.random::<f64>() - 1.0),
            ));
            let d = x.displacement_to(&y);
            let c = basis.apply(d);
            // x + a·e_s = y + b·e_u forces a = c_s.
            let expect = x.translate(es * c.x);
            let b = ps.bracket(&x, &y).unwrap();
            assert!(b.point.distance(&expect) < 1e-10);
            let c1 = m.data.bracket_constant();
            let dxy = x.distance(&y);
            assert!(b.dist_to_x <= c1 * dxy + 1e-15 && b.dist_to_y <= c1 * dxy + 1e-15);
        }
    }

    #[test]
    fn bracket_rejects_distant_points() {
        let m = SystemModel::cat_map();
        let r = ProductStructure::new(&m).bracket(&Point2::torus(0.0, 0.0), &Point2::torus(0.4, 0.4));
        assert!(matches!(r, Err(Error::TooFar { .. })));
    }

    #[test]
    fn contraction_examples() {
        let h = SystemModel::horseshoe();
        let x = Point2::plane(0.0, 0.0);
        let r = local_stable_manifold(&h, &x, 0.1, 1e-11).unwrap();
        let y = r.graph.ambient(0.1);
        let ratios = pair_contraction(&h, &x, &y, 5).unwrap();
        for (k, v) in ratios.iter().enumerate() {
            assert!((v - 3f64.powi(-(k as i32))).abs() < 1e-15);
        }
        let rep = contraction_report(&h, &x, &r.graph, 5);
        assert!(rep.within_lambda_prime);

        let c = SystemModel::cat_map();
        let xo = Point2::torus(0.0, 0.0);
        let rc = local_stable_manifold(&c, &xo, 0.05, 1e-11).unwrap();
        let lam = (3.0 - 5f64.sqrt()) / 2.0;
        let ratios = pair_contraction(&c, &xo, &rc.graph.ambient(0.05), 5).unwrap();
        for (k, v) in ratios.iter().enumerate() {
            assert!((v - lam.powi(k as i32)).abs() < 1e-9);
        }
        assert!(pair_contraction(&c, &xo, &xo, 4).unwrap().iter().all(|v| *v == 0.0));
    }
}
