//! Markov partitions by product rectangles: the analytic horseshoe partition,
//! refinement, Markov verification, transition matrices, and the cover built
//! from shadowing points.

use crate::constants::shadowing_tolerance;
use crate::error::{Error, Result};
use crate::geometry::{Interval, Point2};
use crate::manifold::ProductStructure;
use crate::maps::{Direction, SystemModel};
use crate::shadowing::{shadow_with, PseudoOrbit, ShadowConfig, DEFAULT_SHADOW_CONSTANT};
use crate::symbolic::TransitionMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Interior/boundary slack for membership tests.
pub const PARTITION_MARGIN: f64 = 1e-9;
pub const DEFAULT_RECTANGLE_CAP: usize = 1_000_000;
/// Overlaps thinner than this are treated as ambiguous.
pub const OVERLAP_TOL: f64 = 1e-9;
const SLIVER: f64 = 1e-14;

/// Product rectangle. `s` is the x-extent and `u` the y-extent; on the
/// horseshoe these are the stable and unstable directions. The lengths are
/// tracked separately from the endpoints so that deep refinements keep full
/// relative precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub id: usize,
    pub s: Interval,
    pub u: Interval,
    pub s_len: f64,
    pub u_len: f64,
    /// Generator symbols, `word[k]` at time `word_offset + k`.
    pub word: Vec<usize>,
    pub word_offset: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<Point2>,
}

impl Rectangle {
    pub fn new(id: usize, s: Interval, u: Interval) -> Self {
        Self {
            id,
            s,
            u,
            s_len: s.len(),
            u_len: u.len(),
            word: vec![id],
            word_offset: 0,
            samples: Vec::new(),
        }
    }

    pub fn as_box(&self) -> (Interval, Interval) {
        (self.s, self.u)
    }

    pub fn diameter(&self) -> f64 {
        self.s_len.max(self.u_len)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.s.mid(), self.u.mid())
    }

    pub fn contains(&self, p: &Point2, margin: f64) -> bool {
        self.s.contains(p.x, margin) && self.u.contains(p.y, margin)
    }

    pub fn contains_interior(&self, p: &Point2, margin: f64) -> bool {
        self.s.contains_interior(p.x, margin) && self.u.contains_interior(p.y, margin)
    }

    /// Whether `p` lies within `margin` of an edge that is not part of the
    /// hull of the partition.
    pub fn on_inner_boundary(&self, p: &Point2, hull: &(Interval, Interval), margin: f64) -> bool {
        let near = |v: f64, e: f64, h: f64| (v - e).abs() <= margin && (e - h).abs() > margin;
        near(p.x, self.s.lo, hull.0.lo)
            || near(p.x, self.s.hi, hull.0.hi)
            || near(p.y, self.u.lo, hull.1.lo)
            || near(p.y, self.u.hi, hull.1.hi)
    }

    /// Interior overlap lengths with `o` along s and u.
    pub fn overlaps(&self, o: &Rectangle) -> (f64, f64) {
        (self.s.overlap(&o.s), self.u.overlap(&o.u))
    }
}

/// An interval with its separately tracked length.
#[derive(Clone, Copy, Debug)]
struct Span {
    iv: Interval,
    len: f64,
}

impl Span {
    fn image(&self, scale: f64, shift: f64) -> Span {
        Span {
            iv: self.iv.affine(scale, shift),
            len: self.len * scale.abs(),
        }
    }

    /// Intersection; when one span contains the other the contained length
    /// is kept as is.
    fn meet(&self, o: &Span) -> Span {
        let iv = self.iv.intersect(&o.iv);
        let len = if iv == self.iv {
            self.len
        } else if iv == o.iv {
            o.len
        } else {
            iv.len()
        };
        Span { iv, len }
    }
}

fn spans(r: &Rectangle) -> (Span, Span) {
    (
        Span { iv: r.s, len: r.s_len },
        Span { iv: r.u, len: r.u_len },
    )
}

fn from_spans(s: Span, u: Span, word: Vec<usize>, word_offset: i64) -> Rectangle {
    Rectangle {
        id: 0,
        s: s.iv,
        u: u.iv,
        s_len: s.len,
        u_len: u.len,
        word,
        word_offset,
        samples: Vec::new(),
    }
}

/// How a refinement round joins the partition with its images.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineMode {
    /// Join with `f(𝒫)`: narrows the stable extent, doubles the count.
    #[default]
    Pushforward,
    /// Join with `f⁻¹(𝒫)`: narrows the unstable extent, doubles the count.
    Pullback,
    /// Both joins: narrows both extents, quadruples the count.
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub rectangles: Vec<Rectangle>,
    pub model: String,
    pub rounds: usize,
    pub mode: Option<RefineMode>,
}

impl Partition {
    /// Renumbers rectangle ids to their positions.
    pub fn new(model: impl Into<String>, mut rectangles: Vec<Rectangle>) -> Self {
        for (i, r) in rectangles.iter_mut().enumerate() {
            r.id = i;
        }
        Self {
            rectangles,
            model: model.into(),
            rounds: 0,
            mode: None,
        }
    }

    pub fn len(&self) -> usize {
        self.rectangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rectangles.is_empty()
    }

    pub fn diameter(&self) -> f64 {
        self.rectangles.iter().map(Rectangle::diameter).fold(0.0, f64::max)
    }

    pub fn s_diameter(&self) -> f64 {
        self.rectangles.iter().map(|r| r.s_len).fold(0.0, f64::max)
    }

    pub fn u_diameter(&self) -> f64 {
        self.rectangles.iter().map(|r| r.u_len).fold(0.0, f64::max)
    }

    /// The extent a refinement mode drives down.
    pub fn refinement_diameter(&self, mode: RefineMode) -> f64 {
        match mode {
            RefineMode::Pushforward => self.s_diameter(),
            RefineMode::Pullback => self.u_diameter(),
            RefineMode::Both => self.diameter(),
        }
    }

    pub fn hull(&self) -> (Interval, Interval) {
        let inf = Interval::new(f64::INFINITY, f64::NEG_INFINITY);
        self.rectangles.iter().fold((inf, inf), |(s, u), r| {
            (
                Interval::new(s.lo.min(r.s.lo), s.hi.max(r.s.hi)),
                Interval::new(u.lo.min(r.u.lo), u.hi.max(r.u.hi)),
            )
        })
    }

    /// Lowest-index rectangle containing `p`.
    pub fn locate(&self, p: &Point2, margin: f64) -> Option<usize> {
        self.rectangles.iter().position(|r| r.contains(p, margin))
    }

    /// Horseshoe branch whose strip contains rectangle `id`.
    pub fn strip_of(&self, model: &SystemModel, id: usize) -> Option<usize> {
        let br = model.horseshoe_branches()?;
        let r = &self.rectangles[id];
        br.iter()
            .position(|b| r.u.lo >= b.y_lo - 1e-12 && r.u.hi <= b.y_hi + 1e-12)
    }
}

/// `R_i = Λ ∩ ([0,1] × H_i)` for the two horseshoe strips.
pub fn base_partition(model: &SystemModel) -> Result<Partition> {
    let br = model.horseshoe_branches().ok_or_else(|| {
        Error::UnsupportedModel(format!(
            "no analytic partition for {}; use the shadowing cover",
            model.name()
        ))
    })?;
    let rects = br
        .iter()
        .enumerate()
        .map(|(i, b)| Rectangle::new(i, Interval::new(0.0, 1.0), Interval::new(b.y_lo, b.y_hi)))
        .collect();
    Ok(Partition::new(model.name(), rects))
}

fn nonempty(s: &Span, u: &Span) -> bool {
    s.iv.len() > SLIVER && u.iv.len() > SLIVER
}

fn strip_branch(model: &SystemModel, r: &Rectangle) -> Result<usize> {
    let br = model
        .horseshoe_branches()
        .ok_or_else(|| Error::UnsupportedModel("refinement needs the affine horseshoe".into()))?;
    br.iter()
        .position(|b| r.u.lo >= b.y_lo - 1e-12 && r.u.hi <= b.y_hi + 1e-12)
        .ok_or_else(|| Error::UnsupportedModel("rectangle straddles both strips".into()))
}

/// `{g ∩ f(q)}`; words grow at the end.
fn join_forward(model: &SystemModel, gen: &[Rectangle], cur: &[Rectangle]) -> Result<Vec<Rectangle>> {
    let br = model.horseshoe_branches().unwrap();
    let mut out = Vec::new();
    for q in cur {
        let b = &br[strip_branch(model, q)?];
        let (qs, qu) = spans(q);
        let (is, iu) = (qs.image(b.x_scale, b.x_shift), qu.image(b.y_scale, b.y_shift));
        for g in gen {
            let (gs, gu) = spans(g);
            let (s, u) = (gs.meet(&is), gu.meet(&iu));
            if nonempty(&s, &u) {
                let mut w = q.word.clone();
                w.push(g.id);
                out.push(from_spans(s, u, w, q.word_offset - 1));
            }
        }
    }
    Ok(out)
}

/// `{g ∩ f⁻¹(q)}`; words grow at the front.
fn join_backward(model: &SystemModel, gen: &[Rectangle], cur: &[Rectangle]) -> Result<Vec<Rectangle>> {
    let br = model.horseshoe_branches().unwrap();
    let mut out = Vec::new();
    for g in gen {
        let b = &br[strip_branch(model, g)?];
        let (lo, hi) = b.image_x();
        let vstrip = Span {
            iv: Interval::new(lo, hi),
            len: b.x_scale.abs(),
        };
        let (gs, gu) = spans(g);
        for q in cur {
            let (qs, qu) = spans(q);
            let s = qs.meet(&vstrip).image(1.0 / b.x_scale, -b.x_shift / b.x_scale);
            let u = qu.image(1.0 / b.y_scale, -b.y_shift / b.y_scale);
            let (s, u) = (gs.meet(&s), gu.meet(&u));
            if nonempty(&s, &u) {
                let mut w = vec![g.id];
                w.extend_from_slice(&q.word);
                out.push(from_spans(s, u, w, q.word_offset));
            }
        }
    }
    Ok(out)
}

fn check_cap(count: usize, cap: usize) -> Result<()> {
    if count > cap {
        Err(Error::BudgetExceeded { count, cap })
    } else {
        Ok(())
    }
}

/// Combines past-refined and future-refined pieces sharing the time-0 symbol.
fn combine(past: &[Rectangle], fut: &[Rectangle], cap: usize) -> Result<Vec<Rectangle>> {
    let mut by_first: BTreeMap<usize, Vec<&Rectangle>> = BTreeMap::new();
    for f in fut {
        by_first.entry(f.word[0]).or_default().push(f);
    }
    let count: usize = past
        .iter()
        .map(|p| by_first.get(p.word.last().unwrap()).map_or(0, Vec::len))
        .sum();
    check_cap(count, cap)?;
    let mut out = Vec::with_capacity(count);
    for p in past {
        let Some(fs) = by_first.get(p.word.last().unwrap()) else { continue };
        let (ps, pu) = spans(p);
        for f in fs {
            let (fs_, fu) = spans(f);
            let (s, u) = (ps.meet(&fs_), pu.meet(&fu));
            if nonempty(&s, &u) {
                let mut w = p.word.clone();
                w.extend_from_slice(&f.word[1..]);
                out.push(from_spans(s, u, w, p.word_offset));
            }
        }
    }
    Ok(out)
}

struct Refiner<'a> {
    model: &'a SystemModel,
    gen: Vec<Rectangle>,
    past: Vec<Rectangle>,
    fut: Vec<Rectangle>,
    cap: usize,
}

impl<'a> Refiner<'a> {
    fn new(model: &'a SystemModel, p: &Partition, cap: usize) -> Self {
        let gen: Vec<Rectangle> = p
            .rectangles
            .iter()
            .map(|r| Rectangle {
                word: vec![r.id],
                word_offset: 0,
                samples: Vec::new(),
                ..r.clone()
            })
            .collect();
        Self {
            model,
            past: gen.clone(),
            fut: gen.clone(),
            gen,
            cap,
        }
    }

    fn step(&mut self, mode: RefineMode) -> Result<()> {
        let bound = |n: usize| n.saturating_mul(self.gen.len());
        if mode != RefineMode::Pullback {
            check_cap(bound(self.past.len()).min(self.cap.saturating_add(1)), self.cap.saturating_mul(self.gen.len()))?;
            self.past = join_forward(self.model, &self.gen, &self.past)?;
            check_cap(self.past.len(), self.cap)?;
        }
        if mode != RefineMode::Pushforward {
            self.fut = join_backward(self.model, &self.gen, &self.fut)?;
            check_cap(self.fut.len(), self.cap)?;
        }
        Ok(())
    }

    fn partition(&self, tag: &str, rounds: usize, mode: RefineMode) -> Result<Partition> {
        let rects = match mode {
            RefineMode::Pushforward => self.past.clone(),
            RefineMode::Pullback => self.fut.clone(),
            RefineMode::Both => combine(&self.past, &self.fut, self.cap)?,
        };
        let mut p = Partition::new(tag, rects);
        p.rounds = rounds;
        p.mode = Some(mode);
        Ok(p)
    }
}

/// `k` refinement rounds using `p` as the generator.
pub fn refine_rounds(model: &SystemModel, p: &Partition, k: usize, mode: RefineMode, cap: usize) -> Result<Partition> {
    let mut r = Refiner::new(model, p, cap);
    for _ in 0..k {
        r.step(mode)?;
    }
    r.partition(&p.model, p.rounds + k, mode)
}

/// Refines until the extent narrowed by `mode` is at most `eps`.
pub fn refine_to_diameter(
    model: &SystemModel,
    p: &Partition,
    eps: f64,
    mode: RefineMode,
    cap: usize,
) -> Result<Partition> {
    if p.refinement_diameter(mode) <= eps {
        return Ok(p.clone());
    }
    let mut r = Refiner::new(model, p, cap);
    let start = p.refinement_diameter(mode);
    for k in 1.. {
        r.step(mode)?;
        let q = r.partition(&p.model, p.rounds + k, mode)?;
        let d = q.refinement_diameter(mode);
        if d <= eps {
            return Ok(q);
        }
        if k > 2 && d >= start {
            return Err(Error::Validation("refinement does not shrink the partition".into()));
        }
    }
    unreachable!()
}

/// Copy of `p` with rectangle `index` widened about its centre by `factor`.
pub fn corrupted(p: &Partition, index: usize, factor: f64) -> Partition {
    let mut q = p.clone();
    let r = &mut q.rectangles[index];
    r.s = r.s.widened(factor);
    r.u = r.u.widened(factor);
    r.s_len = r.s.len();
    r.u_len = r.u.len();
    q
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovViolation {
    pub rect: usize,
    pub target: Option<usize>,
    /// `unstable_cover`, `stable_inclusion` or `overlap`.
    pub condition: String,
    pub margin: f64,
    pub sample: Option<Point2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub pass: bool,
    pub worst_margin: f64,
    pub worst: Option<MarkovViolation>,
    pub violations: usize,
    pub checked: usize,
    pub rectangles: usize,
}

/// Indices sorted by `s.lo`, for range scans.
struct SIndex {
    order: Vec<usize>,
    max_len: f64,
}

impl SIndex {
    fn new(p: &Partition) -> Self {
        let mut order: Vec<usize> = (0..p.len()).collect();
        order.sort_by(|&a, &b| p.rectangles[a].s.lo.total_cmp(&p.rectangles[b].s.lo));
        let max_len = p.rectangles.iter().map(|r| r.s.len()).fold(0.0, f64::max);
        Self { order, max_len }
    }

    /// Rectangles whose s-interval may meet `[lo, hi]`.
    fn candidates<'a>(&'a self, p: &'a Partition, lo: f64, hi: f64) -> impl Iterator<Item = usize> + 'a {
        let from = lo - self.max_len - PARTITION_MARGIN;
        let start = self.order.partition_point(|&i| p.rectangles[i].s.lo < from);
        self.order[start..]
            .iter()
            .copied()
            .take_while(move |&i| p.rectangles[i].s.lo <= hi + PARTITION_MARGIN)
    }
}

fn grid_samples(r: &Rectangle, n: usize) -> impl Iterator<Item = (f64, f64)> + '_ {
    (0..n * n).map(move |k| {
        let (a, b) = (k / n, k % n);
        (
            r.s.lo + r.s.len() * (a as f64 + 0.5) / n as f64,
            r.u.lo + r.u.len() * (b as f64 + 0.5) / n as f64,
        )
    })
}

/// Checks (M2) on the boxes and (M3) by mapping slice endpoints through
/// sampled interior points. Slices run along the coordinate axes.
pub fn verify_markov(model: &SystemModel, p: &Partition, samples_per_rect: usize) -> MarkovReport {
    let n = ((samples_per_rect as f64).sqrt().ceil() as usize).max(2);
    let index = SIndex::new(p);
    let per_rect: Vec<(Vec<MarkovViolation>, usize, f64, Option<MarkovViolation>)> = p
        .rectangles
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut bad = Vec::new();
            let mut checked = 0;
            let mut worst = f64::INFINITY;
            let mut worst_v = None;
            for (sx, sy) in grid_samples(r, n) {
                let x = model.point(sx, sy);
                let Ok(fx) = model.forward(&x) else { continue };
                let img = |a: (f64, f64), b: (f64, f64)| -> Option<(Point2, Point2)> {
                    let pa = model.step_near(&x, &model.point(a.0, a.1), Direction::Forward).ok()?;
                    let pb = model.step_near(&x, &model.point(b.0, b.1), Direction::Forward).ok()?;
                    Some((pa, pb))
                };
                let (Some((ua, ub)), Some((sa, sb))) = (
                    img((sx, r.u.lo), (sx, r.u.hi)),
                    img((r.s.lo, sy), (r.s.hi, sy)),
                ) else {
                    continue;
                };
                let u_img = Interval::new(ua.y.min(ub.y), ua.y.max(ub.y));
                let s_img = Interval::new(sa.x.min(sb.x), sa.x.max(sb.x));
                for j in index.candidates(p, fx.x, fx.x) {
                    let t = &p.rectangles[j];
                    if !t.contains_interior(&fx, PARTITION_MARGIN) {
                        continue;
                    }
                    checked += 1;
                    let mu = (u_img.hi - t.u.hi).min(t.u.lo - u_img.lo);
                    let ms = (t.s.hi - s_img.hi).min(s_img.lo - t.s.lo);
                    for (m, cond) in [(mu, "unstable_cover"), (ms, "stable_inclusion")] {
                        let v = MarkovViolation {
                            rect: i,
                            target: Some(j),
                            condition: cond.into(),
                            margin: m,
                            sample: Some(x),
                        };
                        if m < worst {
                            worst = m;
                            worst_v = Some(v.clone());
                        }
                        if m < -PARTITION_MARGIN {
                            bad.push(v);
                        }
                    }
                }
            }
            // (M2): interiors of later rectangles must not meet this one.
            for j in index.candidates(p, r.s.lo, r.s.hi) {
                if j <= i {
                    continue;
                }
                let (os, ou) = r.overlaps(&p.rectangles[j]);
                let ov = os.min(ou);
                let m = -ov;
                let v = MarkovViolation {
                    rect: i,
                    target: Some(j),
                    condition: "overlap".into(),
                    margin: m,
                    sample: None,
                };
                if ov > PARTITION_MARGIN {
                    if m < worst {
                        worst = m;
                        worst_v = Some(v.clone());
                    }
                    bad.push(v);
                }
            }
            (bad, checked, worst, worst_v)
        })
        .collect();
    let mut violations = 0;
    let mut checked = 0;
    let mut worst_margin = f64::INFINITY;
    let mut worst = None;
    for (bad, c, w, wv) in per_rect {
        violations += bad.len();
        checked += c;
        if w < worst_margin {
            worst_margin = w;
            worst = wv;
        }
    }
    MarkovReport {
        pass: violations == 0 && checked > 0,
        worst_margin,
        worst: if violations > 0 { worst } else { None },
        violations,
        checked,
        rectangles: p.len(),
    }
}

/// `A_ij = 1` iff `int R_i ∩ f⁻¹(int R_j) ≠ ∅`: by box images on the
/// horseshoe, by interior samples otherwise.
pub fn transition_matrix(model: &SystemModel, p: &Partition) -> TransitionMatrix {
    let m = p.len();
    let index = SIndex::new(p);
    let rows: Vec<Vec<u64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let r = &p.rectangles[i];
            let mut row = vec![0u64; m];
            if let (Some(br), Some(b)) = (model.horseshoe_branches(), p.strip_of(model, i)) {
                let b = &br[b];
                let s = r.s.affine(b.x_scale, b.x_shift);
                let u = r.u.affine(b.y_scale, b.y_shift);
                for j in index.candidates(p, s.lo, s.hi) {
                    let t = &p.rectangles[j];
                    if s.overlap(&t.s) > PARTITION_MARGIN.min(0.5 * t.s.len())
                        && u.overlap(&t.u) > PARTITION_MARGIN.min(0.5 * t.u.len())
                    {
                        row[j] = 1;
                    }
                }
                return row;
            }
            let pts = grid_samples(r, 8)
                .map(|(x, y)| model.point(x, y))
                .chain(r.samples.iter().copied());
            for x in pts {
                if let Ok(fx) = model.forward(&x) {
                    for (j, t) in p.rectangles.iter().enumerate() {
                        if t.contains_interior(&fx, 0.0) {
                            row[j] = 1;
                        }
                    }
                }
            }
            row
        })
        .collect();
    TransitionMatrix::new(rows).expect("square by construction")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverConfig {
    pub constant: f64,
    pub samples: usize,
    pub windows_per_point: usize,
    /// Half-length `W` of the sampled windows `q_{-W..W}`.
    pub half_window: usize,
    pub seed: u64,
}

impl Default for CoverConfig {
    fn default() -> Self {
        Self {
            constant: DEFAULT_SHADOW_CONSTANT,
            samples: 20_000,
            windows_per_point: 12,
            half_window: 10,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowCover {
    pub gamma: f64,
    pub beta: f64,
    pub alpha: f64,
    pub points: Vec<Point2>,
    /// `i → j` iff `d(f(p_i), p_j) < α`.
    pub relation: TransitionMatrix,
    /// `T_s` as bounding boxes carrying their shadow points.
    pub rectangles: Vec<Rectangle>,
    pub max_diameter: f64,
    pub diameter_over_beta: f64,
}

fn nearest(points: &[Point2], q: &Point2) -> f64 {
    points.iter().map(|p| p.distance(q)).fold(f64::INFINITY, f64::min)
}

/// Shadowing cover: a γ-dense point set `P`, its α-transition relation, and
/// `T_s = {θ(q) : q admissible, q_0 = p_s}` realised on sampled windows.
pub fn build_cover_via_shadowing(model: &SystemModel, gamma: f64, beta: f64, cfg: &CoverConfig) -> Result<ShadowCover> {
    let alpha = shadowing_tolerance(cfg.constant, model.data.lambda, beta)?;
    if !(gamma > 0.0 && gamma < alpha / 2.0) {
        return Err(Error::Validation(format!(
            "gamma {gamma} must lie in (0, alpha/2) with alpha = {alpha}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let batch = model.sample_invariant_set(cfg.samples, &mut rng);
    // A γ/2-net of the first batch is γ-dense once the batch itself is
    // γ/2-dense, which the second batch audits.
    let mut points: Vec<Point2> = Vec::new();
    for q in &batch {
        if nearest(&points, q) >= gamma / 2.0 {
            points.push(*q);
        }
    }
    let audit = model.sample_invariant_set(cfg.samples / 4, &mut rng);
    if let Some(d) = audit
        .iter()
        .map(|q| nearest(&points, q))
        .find(|d| *d > gamma)
    {
        return Err(Error::InsufficientDensity { gamma, distance: d });
    }
    let images: Vec<Point2> = points
        .iter()
        .map(|p| model.forward(p))
        .collect::<Result<_>>()?;
    let m = points.len();
    let relation = TransitionMatrix::from_fn(m, |i, j| u64::from(images[i].distance(&points[j]) < alpha));
    let preds: Vec<Vec<usize>> = (0..m)
        .map(|j| (0..m).filter(|&i| relation.get(i, j) > 0).collect())
        .collect();
    let w = cfg.half_window;
    let rects: Vec<Rectangle> = (0..m)
        .into_par_iter()
        .map_init(
            || ProductStructure::new(model),
            |ps, s| -> Result<Rectangle> {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (s as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let mut shadows = Vec::with_capacity(cfg.windows_per_point);
                for _ in 0..cfg.windows_per_point {
                    let mut fwd = vec![s];
                    for _ in 0..w {
                        let succ: Vec<usize> = relation.successors(*fwd.last().unwrap()).collect();
                        fwd.push(succ[rng.random_range(0..succ.len())]);
                    }
                    let mut back = vec![s];
                    for _ in 0..w {
                        let pr = &preds[*back.last().unwrap()];
                        if pr.is_empty() {
                            break;
                        }
                        back.push(pr[rng.random_range(0..pr.len())]);
                    }
                    let centre = back.len() - 1;
                    let idx: Vec<usize> = back.iter().rev().chain(fwd.iter().skip(1)).copied().collect();
                    let po = PseudoOrbit::finite(idx.iter().map(|&i| points[i]).collect(), alpha);
                    let sh = shadow_with(ps, &po, &ShadowConfig { block: Some(1), constant: cfg.constant, ..Default::default() })?;
                    shadows.push(sh.orbit[centre]);
                }
                let fold = |f: fn(&Point2) -> f64| {
                    shadows.iter().fold(Interval::new(f64::INFINITY, f64::NEG_INFINITY), |i, p| {
                        Interval::new(i.lo.min(f(p)), i.hi.max(f(p)))
                    })
                };
                let mut r = Rectangle::new(s, fold(|p| p.x), fold(|p| p.y));
                r.samples = shadows;
                Ok(r)
            },
        )
        .collect::<Result<_>>()?;
    let max_diameter = rects
        .iter()
        .map(|r| {
            r.samples
                .iter()
                .flat_map(|a| r.samples.iter().map(move |b| a.distance(b)))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Ok(ShadowCover {
        gamma,
        beta,
        alpha,
        points,
        relation,
        rectangles: rects,
        max_diameter,
        diameter_over_beta: max_diameter / beta,
    })
}

fn dedup_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    v
}

/// Cell index `k` with `b[k] ≤ v ≤ b[k+1]`, restricted to `[lo, hi]`.
fn cell_of(b: &[f64], v: f64, lo: f64, hi: f64) -> usize {
    let first = b.partition_point(|x| *x < lo - 1e-12);
    let last = b.partition_point(|x| *x <= hi + 1e-12) - 1;
    let k = b.partition_point(|x| *x <= v).saturating_sub(1);
    k.clamp(first, last.saturating_sub(1).max(first))
}

/// Common refinement of overlapping cover rectangles. Each connected group
/// of overlapping rectangles is cut along all of its endpoints; cells that
/// hold sample points (or, without samples, lie in some rectangle) survive.
/// A cell's word lists the cover rectangles containing it.
pub fn refine_intersections(model: &SystemModel, cover: &[Rectangle]) -> Result<Partition> {
    let n = cover.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let next = p[j];
            p[j] = r;
            j = next;
        }
        r
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cover[a].s.lo.total_cmp(&cover[b].s.lo));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if cover[j].s.lo >= cover[i].s.hi {
                break;
            }
            let (os, ou) = cover[i].overlaps(&cover[j]);
            if os <= 0.0 || ou <= 0.0 {
                continue;
            }
            if os < OVERLAP_TOL || ou < OVERLAP_TOL {
                return Err(Error::DegenerateOverlap {
                    first: i.min(j),
                    second: i.max(j),
                });
            }
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut cells = Vec::new();
    for members in groups.values() {
        let sb = dedup_sorted(members.iter().flat_map(|&i| [cover[i].s.lo, cover[i].s.hi]).collect());
        let ub = dedup_sorted(members.iter().flat_map(|&i| [cover[i].u.lo, cover[i].u.hi]).collect());
        let with_samples = members.iter().any(|&i| !cover[i].samples.is_empty());
        let mut keys: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &i in members {
            let r = &cover[i];
            if with_samples {
                for p in &r.samples {
                    keys.insert((
                        cell_of(&sb, p.x, r.s.lo, r.s.hi),
                        cell_of(&ub, p.y, r.u.lo, r.u.hi),
                    ));
                }
            } else {
                let s0 = cell_of(&sb, r.s.lo, r.s.lo, r.s.hi);
                let s1 = cell_of(&sb, r.s.hi, r.s.lo, r.s.hi);
                let u0 = cell_of(&ub, r.u.lo, r.u.lo, r.u.hi);
                let u1 = cell_of(&ub, r.u.hi, r.u.lo, r.u.hi);
                for a in s0..=s1 {
                    for b in u0..=u1 {
                        keys.insert((a, b));
                    }
                }
            }
        }
        for (a, b) in keys {
            let s = Interval::new(sb[a], sb[a + 1]);
            let u = Interval::new(ub[b], ub[b + 1]);
            let centre = model.point(s.mid(), u.mid());
            let word: Vec<usize> = members
                .iter()
                .copied()
                .filter(|&i| cover[i].contains(&centre, 0.0))
                .collect();
            let mut r = Rectangle::new(0, s, u);
            r.word = word;
            let cell = r.clone();
            for &i in members {
                r.samples.extend(cover[i].samples.iter().filter(|p| cell.contains(p, 1e-12)));
            }
            cells.push(r);
        }
    }
    Ok(Partition::new(model.name(), cells))
}
