//! Pseudo-orbits, shadowing by iterated bracketing, Anosov closing and
//! periodic specification.

use crate::constants::shadowing_tolerance;
use crate::error::{Error, Result};
use crate::geometry::{Point2, Vec2};
use crate::manifold::ProductStructure;
use crate::maps::{splitting, SystemModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Shadowing constant used when none is supplied.
pub const DEFAULT_SHADOW_CONSTANT: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Finite,
    PeriodicExtension,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PseudoOrbit {
    pub points: Vec<Point2>,
    pub alpha: f64,
    pub boundary: Boundary,
}

impl PseudoOrbit {
    pub fn finite(points: Vec<Point2>, alpha: f64) -> Self {
        Self {
            points,
            alpha,
            boundary: Boundary::Finite,
        }
    }

    pub fn periodic(points: Vec<Point2>, alpha: f64) -> Self {
        Self {
            points,
            alpha,
            boundary: Boundary::PeriodicExtension,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapAudit {
    pub valid: bool,
    pub worst_gap: f64,
    /// Index `i` of the worst gap `d(f(x_i), x_{i+1})`.
    pub location: usize,
    pub gaps: Vec<f64>,
}

/// Per-gap audit of `d(f(x_i), x_{i+1})`, including the wrap-around gap for
/// periodic orbits.
pub fn validate_pseudo_orbit(model: &SystemModel, orbit: &PseudoOrbit) -> Result<GapAudit> {
    let n = orbit.points.len();
    if n < 2 && orbit.boundary == Boundary::Finite {
        return Err(Error::Validation("a pseudo-orbit needs at least two points".into()));
    }
    if n == 0 {
        return Err(Error::Validation("empty pseudo-orbit".into()));
    }
    let count = match orbit.boundary {
        Boundary::Finite => n - 1,
        Boundary::PeriodicExtension => n,
    };
    let mut gaps = Vec::with_capacity(count);
    for i in 0..count {
        let fx = model.forward(&orbit.points[i])?;
        gaps.push(fx.distance(&orbit.points[(i + 1) % n]));
    }
    let (location, worst_gap) = gaps
        .iter()
        .cloned()
        .enumerate()
        .fold((0, 0.0f64), |(li, lg), (i, g)| if g > lg { (i, g) } else { (li, lg) });
    Ok(GapAudit {
        valid: gaps.iter().all(|g| *g < orbit.alpha),
        worst_gap,
        location,
        gaps,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowConfig {
    /// Block length `M`; `None` picks the smallest `M` with `λ^M < 1/2`.
    pub block: Option<usize>,
    /// Error instead of warn when the achieved accuracy beats the prediction
    /// by more than 5%.
    pub strict: bool,
    pub constant: f64,
    /// Convergence tolerance of successive periodic candidates.
    pub periodic_tol: f64,
    pub max_extension_points: usize,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        Self {
            block: None,
            strict: false,
            constant: DEFAULT_SHADOW_CONSTANT,
            periodic_tol: 1e-12,
            max_extension_points: 1 << 20,
        }
    }
}

impl ShadowConfig {
    pub fn strict() -> Self {
        Self {
            strict: true,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowResult {
    pub start: Point2,
    pub orbit: Vec<Point2>,
    pub achieved_beta: f64,
    pub per_step_errors: Vec<f64>,
    pub predicted_beta: f64,
    pub block: usize,
    /// `achieved_beta / α`.
    pub empirical_ratio: f64,
    /// Number of cycles of the periodic extension, when used.
    pub periodic_cycles: Option<usize>,
    pub warning: Option<String>,
}

/// Smallest `M ≥ 1` with `λ^M < 1/2`.
pub fn default_block_length(lambda: f64) -> usize {
    let mut m = 1;
    while lambda.powi(m as i32) >= 0.5 {
        m += 1;
    }
    m
}

fn iterate(model: &SystemModel, p: &Point2, n: usize, back: bool) -> Result<Point2> {
    let mut q = *p;
    for _ in 0..n {
        q = if back { model.inverse(&q)? } else { model.forward(&q)? };
    }
    Ok(q)
}

/// Block-bracketing over a finite window. The forward pass builds
/// `z_{k+1} = W^s(y_{k+1}) ∩ W^u(f^M z_k)`; the backward pass replaces
/// `f^{-rM}(z_r)` by `w_k = W^s(f^{-M} w_{k+1}) ∩ W^u(z_k)`, which equals it
/// exactly but only ever applies `f^{-M}` along stable leaves.
fn sweep(ps: &ProductStructure, pts: &[Point2], m: usize) -> Result<Vec<Point2>> {
    let model = ps.model();
    let n = pts.len();
    let r = (n - 1) / m;
    let mut z = Vec::with_capacity(r + 1);
    z.push(pts[0]);
    for k in 0..r {
        let image = iterate(model, &z[k], m, false)?;
        z.push(ps.bracket(&pts[(k + 1) * m], &image)?.point);
    }
    let mut w = vec![z[r]; r + 1];
    for k in (0..r).rev() {
        let pre = iterate(model, &w[k + 1], m, true)?;
        w[k] = ps.bracket(&pre, &z[k])?.point;
    }
    let mut out = Vec::with_capacity(n);
    for (k, wk) in w.iter().enumerate() {
        out.push(*wk);
        let steps = if k == r { n - 1 - r * m } else { m - 1 };
        let mut q = *wk;
        for _ in 0..steps {
            q = model.forward(&q)?;
            out.push(q);
        }
    }
    Ok(out)
}

/// Shadows a finite or periodic pseudo-orbit.
pub fn shadow(model: &SystemModel, orbit: &PseudoOrbit, cfg: &ShadowConfig) -> Result<ShadowResult> {
    let ps = ProductStructure::new(model);
    shadow_with(&ps, orbit, cfg)
}

/// As [`shadow`], reusing a product-structure engine.
pub fn shadow_with(ps: &ProductStructure, orbit: &PseudoOrbit, cfg: &ShadowConfig) -> Result<ShadowResult> {
    let model = ps.model();
    let audit = validate_pseudo_orbit(model, orbit)?;
    if !audit.valid {
        return Err(Error::InvalidPseudoOrbit {
            index: audit.location,
            gap: audit.worst_gap,
            alpha: orbit.alpha,
        });
    }
    let lambda = model.data.lambda;
    let m = cfg.block.unwrap_or_else(|| default_block_length(lambda)).max(1);
    let n = orbit.points.len();
    let (shadow_orbit, cycles) = match orbit.boundary {
        Boundary::Finite => (sweep(ps, &orbit.points, m)?, None),
        Boundary::PeriodicExtension => {
            if n % m != 0 {
                return Err(Error::Validation(format!(
                    "period {n} is not a multiple of the block length {m}"
                )));
            }
            let (o, j) = periodic_sweep(ps, &orbit.points, m, cfg)?;
            (o, Some(j))
        }
    };
    let per_step_errors: Vec<f64> = shadow_orbit
        .iter()
        .zip(&orbit.points)
        .map(|(a, b)| a.distance(b))
        .collect();
    let achieved_beta = per_step_errors.iter().cloned().fold(0.0, f64::max);
    let predicted_beta = cfg.constant * orbit.alpha / (1.0 - lambda);
    let mut warning = None;
    if achieved_beta > predicted_beta * 1.05 {
        if cfg.strict {
            return Err(Error::ToleranceExceeded {
                achieved: achieved_beta,
                predicted: predicted_beta,
            });
        }
        warning = Some(format!(
            "achieved beta {achieved_beta:e} exceeds predicted {predicted_beta:e}"
        ));
    }
    Ok(ShadowResult {
        start: shadow_orbit[0],
        orbit: shadow_orbit,
        achieved_beta,
        per_step_errors,
        predicted_beta,
        block: m,
        empirical_ratio: achieved_beta / orbit.alpha,
        periodic_cycles: cycles,
        warning,
    })
}

/// Periodic extension: sweep `J` copies of the cycle and read off the middle
/// one, doubling `J` until successive starts agree.
fn periodic_sweep(
    ps: &ProductStructure,
    pts: &[Point2],
    m: usize,
    cfg: &ShadowConfig,
) -> Result<(Vec<Point2>, usize)> {
    let n = pts.len();
    let mut prev: Option<Point2> = None;
    let mut j = 3usize;
    loop {
        let ext: Vec<Point2> = (0..j * n).map(|i| pts[i % n]).collect();
        let full = sweep(ps, &ext, m)?;
        let mid = (j / 2) * n;
        let cand = full[mid..mid + n].to_vec();
        if let Some(p) = prev {
            let change = p.distance(&cand[0]);
            if change <= cfg.periodic_tol {
                return Ok((cand, j));
            }
            if 2 * j * n > cfg.max_extension_points {
                return Err(Error::NoConvergence {
                    iterations: j,
                    change,
                });
            }
        }
        prev = Some(cand[0]);
        j = 2 * j - 1;
    }
}

/// Shadows many pseudo-orbits in parallel; results keep input order.
pub fn shadow_batch(
    model: &SystemModel,
    orbits: &[PseudoOrbit],
    cfg: &ShadowConfig,
    jobs: Option<usize>,
) -> Vec<Result<ShadowResult>> {
    let run = || {
        orbits
            .par_iter()
            .map_init(|| ProductStructure::new(model), |ps, o| shadow_with(ps, o, cfg))
            .collect()
    };
    match jobs {
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    }
}

fn ball_noise<R: Rng>(rng: &mut R, amplitude: f64) -> Vec2 {
    Vec2::new(
        amplitude * (2.0 * rng.random::<f64>() - 1.0),
        amplitude * (2.0 * rng.random::<f64>() - 1.0),
    )
}

/// Seeded noisy orbit of `len` points. On the horseshoe each point of the
/// true orbit is perturbed independently and snapped back onto the strips
/// (gaps ≤ 4·amplitude); elsewhere `x_{i+1} = f(x_i) + η_i` (gaps ≤ amplitude).
pub fn noisy_orbit(
    model: &SystemModel,
    start: &Point2,
    len: usize,
    amplitude: f64,
    seed: u64,
) -> Result<PseudoOrbit> {
    if len == 0 {
        return Err(Error::Validation("length must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if model.horseshoe_branches().is_some() {
        let truth = model.horseshoe_orbit(start, len)?;
        let pts = truth
            .iter()
            .map(|p| model.snap(&p.translate(ball_noise(&mut rng, amplitude))))
            .collect();
        return Ok(PseudoOrbit::finite(pts, 4.0 * amplitude * (1.0 + 1e-9) + 1e-15));
    }
    let mut pts = vec![*start];
    for _ in 1..len {
        let fx = model.forward(pts.last().unwrap())?;
        pts.push(fx.translate(ball_noise(&mut rng, amplitude)));
    }
    Ok(PseudoOrbit::finite(pts, amplitude * (1.0 + 1e-9) + 1e-15))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosingConfig {
    /// Target accuracy; defaults to `δ₀/2`.
    pub beta: Option<f64>,
    pub constant: f64,
}

impl Default for ClosingConfig {
    fn default() -> Self {
        Self {
            beta: None,
            constant: DEFAULT_SHADOW_CONSTANT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosingResult {
    pub point: Point2,
    pub period: usize,
    pub orbit: Vec<Point2>,
    /// `max_{0≤k≤n} d(f^k x, f^k p)`.
    pub max_distance: f64,
    /// `max_i d(f(p_i), p_{i+1 mod n})` over the computed cycle.
    pub periodicity_residual: f64,
    pub return_distance: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Closes a near-return `d(fⁿx, x) < α` into a period-`n` orbit.
pub fn anosov_close(model: &SystemModel, x: &Point2, n: usize, cfg: &ClosingConfig) -> Result<ClosingResult> {
    if n == 0 {
        return Err(Error::Validation("period must be positive".into()));
    }
    let d = &model.data;
    let beta = cfg.beta.unwrap_or(0.5 * d.delta0);
    let alpha = shadowing_tolerance(cfg.constant, d.lambda, beta)?;
    let truth = model.snapped_orbit(x, 0, n)?;
    let return_distance = truth[n].distance(x);
    if return_distance >= alpha {
        return Err(Error::NotNearReturn {
            distance: return_distance,
            alpha,
        });
    }
    let po = PseudoOrbit::periodic(truth[..n].to_vec(), alpha);
    let sh = shadow(
        model,
        &po,
        &ShadowConfig {
            block: Some(1),
            constant: cfg.constant,
            ..Default::default()
        },
    )?;
    let cyc = &sh.orbit;
    let mut residual = 0.0f64;
    for i in 0..n {
        let f = model.forward(&cyc[i])?;
        residual = residual.max(f.distance(&cyc[(i + 1) % n]));
    }
    let max_distance = (0..=n)
        .map(|k| truth[k].distance(&cyc[k % n]))
        .fold(0.0, f64::max);
    Ok(ClosingResult {
        point: cyc[0],
        period: n,
        orbit: cyc.clone(),
        max_distance,
        periodicity_residual: residual,
        return_distance,
        alpha,
        beta,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecificationConfig {
    pub periodic: bool,
    /// Tracking accuracy `ε`; defaults to `δ₀/2`.
    pub eps: Option<f64>,
    pub constant: f64,
}

impl Default for SpecificationConfig {
    fn default() -> Self {
        Self {
            periodic: true,
            eps: None,
            constant: DEFAULT_SHADOW_CONSTANT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecificationResult {
    pub point: Point2,
    pub period: Option<usize>,
    /// Start index `a_j` of every segment.
    pub offsets: Vec<usize>,
    /// Largest `d(f^{a_j+i}x, f^i x_j)` per segment.
    pub tracking: Vec<f64>,
    pub pseudo_orbit: PseudoOrbit,
    pub shadow: ShadowResult,
}

/// Gap length after which connectors are found on this model. The horseshoe
/// is a full shift in which any jump below `δ₀` is absorbed symbol by symbol,
/// so one step suffices; otherwise the unstable segment of length `α/4`
/// must stretch far enough to sweep the torus at resolution `α/4`.
pub fn specification_gap(model: &SystemModel, alpha: f64) -> usize {
    if model.horseshoe_branches().is_some() {
        return 1;
    }
    let lambda = model.data.lambda;
    ((64.0 / (alpha * alpha)).ln() / (1.0 / lambda).ln()).ceil().max(1.0) as usize
}

/// Connector `z` with `d(z, e) < α/4` and `d(fⁿz, s) < α/4`, searched along
/// the unstable segment through `e`.
fn find_connector(model: &SystemModel, e: &Point2, s: &Point2, n: usize, alpha: f64) -> Result<Point2> {
    let eu = splitting(model, e)?.e_u;
    let r = alpha / 8.0;
    let stretch = (1.0 / model.data.lambda).powi(n as i32);
    let samples = ((16.0 * stretch * r / alpha).ceil() as usize).clamp(16, 1 << 22);
    let mut best = (f64::INFINITY, *e);
    for i in 0..=samples {
        let t = -r + 2.0 * r * i as f64 / samples as f64;
        let z = e.translate(eu * t);
        let d = iterate(model, &z, n, false)?.distance(s);
        if d < best.0 {
            best = (d, z);
        }
    }
    if best.0 < alpha / 4.0 {
        Ok(best.1)
    } else {
        Err(Error::GapTooSmall {
            gap: n,
            required: n + 1,
        })
    }
}

/// Glues orbit segments `(x_j, ℓ_j)` separated by `gap` steps into one
/// pseudo-orbit and shadows it, periodically by default.
pub fn specification_orbit(
    model: &SystemModel,
    segments: &[(Point2, usize)],
    gap: usize,
    cfg: &SpecificationConfig,
) -> Result<SpecificationResult> {
    if segments.is_empty() || segments.iter().any(|s| s.1 == 0) {
        return Err(Error::Validation("segments must be non-empty".into()));
    }
    let d = &model.data;
    let eps = cfg.eps.unwrap_or(0.5 * d.delta0);
    let alpha = shadowing_tolerance(cfg.constant, d.lambda, eps / 2.0)?;
    let horseshoe = model.horseshoe_branches().is_some();
    let required = specification_gap(model, alpha);
    if segments.len() > 1 || cfg.periodic {
        if gap < required {
            return Err(Error::GapTooSmall { gap, required });
        }
    }
    let mut pts: Vec<Point2> = Vec::new();
    let mut offsets = Vec::new();
    let k = segments.len();
    for (j, (x, len)) in segments.iter().enumerate() {
        offsets.push(pts.len());
        let seg = model.snapped_orbit(x, 0, len - 1)?;
        pts.extend_from_slice(&seg);
        let next = if j + 1 < k {
            Some(segments[j + 1].0)
        } else if cfg.periodic {
            Some(segments[0].0)
        } else {
            None
        };
        let Some(target) = next else { break };
        let end = *seg.last().unwrap();
        // Gap points y_{b+1..a-1} follow the connector's orbit.
        let z = if horseshoe {
            end
        } else {
            find_connector(model, &end, &target, gap, alpha)?
        };
        let mut q = z;
        for _ in 1..gap {
            q = model.forward(&q)?;
            pts.push(if horseshoe { model.snap(&q) } else { q });
        }
    }
    let boundary = if cfg.periodic {
        Boundary::PeriodicExtension
    } else {
        Boundary::Finite
    };
    let mut po = PseudoOrbit {
        points: pts,
        alpha,
        boundary,
    };
    if horseshoe {
        // Symbolic gluing: jumps are bounded by the product-structure scale,
        // not by α.
        let audit = validate_pseudo_orbit(model, &PseudoOrbit { alpha: f64::INFINITY, ..po.clone() })?;
        po.alpha = po.alpha.max(audit.worst_gap * (1.0 + 1e-9) + 1e-15);
    }
    let sh = shadow(
        model,
        &po,
        &ShadowConfig {
            block: Some(1),
            constant: cfg.constant,
            ..Default::default()
        },
    )?;
    let tracking = segments
        .iter()
        .zip(&offsets)
        .map(|((x, len), &a)| -> Result<f64> {
            let seg = model.snapped_orbit(x, 0, len - 1)?;
            Ok(seg
                .iter()
                .enumerate()
                .map(|(i, p)| sh.orbit[(a + i) % sh.orbit.len()].distance(p))
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpecificationResult {
        point: sh.start,
        period: cfg.periodic.then_some(po.points.len()),
        offsets,
        tracking,
        pseudo_orbit: po,
        shadow: sh,
    })
}
