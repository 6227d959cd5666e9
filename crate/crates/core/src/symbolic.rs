//! Subshifts of finite type, entropy and periodic counts, and the coding
//! between symbol windows and points.

use crate::error::{Error, Result};
use crate::geometry::{Interval, Point2};
use crate::maps::SystemModel;
use crate::partition::{Partition, PARTITION_MARGIN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Coding constant `C` of the bound `diam K_N ≤ C·λᴺ·diam ℛ`.
pub const DEFAULT_CODING_CONSTANT: f64 = 1.5;
/// Largest `mⁿ` the brute-force periodic enumeration accepts.
pub const DEFAULT_BRUTE_BUDGET: u128 = 1 << 20;

/// Square matrix with nonnegative integer entries; 0/1 for a subshift.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    m: usize,
    entries: Vec<u64>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(Error::Validation("empty transition matrix".into()));
        }
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Validation("transition matrix is not square".into()));
        }
        Ok(Self {
            m,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(m: usize, f: impl Fn(usize, usize) -> u64) -> Self {
        let entries = (0..m * m).map(|k| f(k / m, k % m)).collect();
        Self { m, entries }
    }

    pub fn full_shift(m: usize) -> Self {
        Self::from_fn(m, |_, _| 1)
    }

    /// Word-overlap matrix on the `mᵏ` words of length `k` of the full
    /// `m`-shift: `w → w'` iff `w[1..] = w'[..k-1]`.
    pub fn de_bruijn(m: usize, k: u32) -> Self {
        let n = m.pow(k);
        Self::from_fn(n, |i, j| u64::from((i * m) % n == j - j % m))
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        (0..self.m).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn is_binary(&self) -> bool {
        self.entries.iter().all(|e| *e <= 1)
    }

    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, e)| **e > 0)
            .map(|(j, _)| j)
    }

    fn submatrix(&self, idx: &[usize]) -> TransitionMatrix {
        Self::from_fn(idx.len(), |i, j| self.get(idx[i], idx[j]))
    }
}

/// Finite piece of a symbol sequence: `symbols[k]` sits at index
/// `offset + k`. Periodic windows repeat in both directions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolWindow {
    pub symbols: Vec<usize>,
    pub offset: i64,
    pub periodic: bool,
}

impl SymbolWindow {
    pub fn new(symbols: Vec<usize>, offset: i64) -> Self {
        Self {
            symbols,
            offset,
            periodic: false,
        }
    }

    pub fn periodic(symbols: Vec<usize>) -> Self {
        Self {
            symbols,
            offset: 0,
            periodic: true,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Last covered index of a finite window.
    pub fn end(&self) -> i64 {
        self.offset + self.symbols.len() as i64 - 1
    }

    pub fn get(&self, j: i64) -> Option<usize> {
        if self.symbols.is_empty() {
            return None;
        }
        let k = j - self.offset;
        if self.periodic {
            Some(self.symbols[k.rem_euclid(self.symbols.len() as i64) as usize])
        } else if k >= 0 && (k as usize) < self.symbols.len() {
            Some(self.symbols[k as usize])
        } else {
            None
        }
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        !self.symbols.is_empty() && (self.periodic || (self.offset <= lo && self.end() >= hi))
    }

    /// The shifted sequence `(σa)_j = a_{j+1}`.
    pub fn shifted(&self) -> Self {
        Self {
            offset: self.offset - 1,
            ..self.clone()
        }
    }
}

fn check_alphabet(w: &SymbolWindow, m: usize) -> Result<()> {
    match w.symbols.iter().find(|s| **s >= m) {
        Some(&s) => Err(Error::AlphabetMismatch {
            symbol: s,
            alphabet: m,
        }),
        None => Ok(()),
    }
}

/// Whether every consecutive pair (and the wrap pair of a periodic word) is
/// an allowed transition.
pub fn is_admissible(a: &TransitionMatrix, w: &SymbolWindow) -> Result<bool> {
    check_alphabet(w, a.size())?;
    let s = &w.symbols;
    let inner = s.windows(2).all(|p| a.get(p[0], p[1]) > 0);
    let wrap = !w.periodic || s.is_empty() || a.get(s[s.len() - 1], s[0]) > 0;
    Ok(inner && wrap)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub rho: f64,
    pub entropy: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Set when plain power iteration stalled and the strongly-connected
    /// decomposition was used instead.
    pub fallback: bool,
}

const POWER_CAP: usize = 100_000;

/// Power iteration from the all-ones vector with the Rayleigh quotient as
/// the estimate. Returns `(rho, iterations, residual, converged)`.
fn power_iteration(a: &TransitionMatrix, shift: f64, tol: f64) -> (f64, usize, f64, bool) {
    let m = a.size();
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| {
                a.row(i)
                    .iter()
                    .zip(v)
                    .map(|(e, x)| *e as f64 * x)
                    .sum::<f64>()
                    + shift * v[i]
            })
            .collect()
    };
    let mut v = vec![1.0; m];
    let mut rho = f64::NAN;
    for it in 1..=POWER_CAP {
        let w = apply(&v);
        let num: f64 = v.iter().zip(&w).map(|(x, y)| x * y).sum();
        let den: f64 = v.iter().map(|x| x * x).sum();
        let r = num / den;
        let norm = w.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        if norm == 0.0 {
            return (0.0, it, 0.0, true);
        }
        let converged = (r - rho).abs() <= tol * r.abs().max(1.0);
        rho = r;
        v = w.iter().map(|x| x / norm).collect();
        if converged {
            let av = apply(&v);
            let residual = av
                .iter()
                .zip(&v)
                .fold(0.0f64, |s, (p, q)| s.max((p - rho * q).abs()));
            return (rho, it, residual, true);
        }
    }
    (rho, POWER_CAP, f64::NAN, false)
}

/// Strongly connected components (Kosaraju), in discovery order.
fn components(a: &TransitionMatrix) -> Vec<Vec<usize>> {
    let m = a.size();
    let mut order = Vec::with_capacity(m);
    let mut seen = vec![false; m];
    for s in 0..m {
        if seen[s] {
            continue;
        }
        let mut stack = vec![(s, 0usize)];
        seen[s] = true;
        while let Some((v, next)) = stack.pop() {
            if let Some(w) = (next..m).find(|&w| a.get(v, w) > 0 && !seen[w]) {
                stack.push((v, w + 1));
                seen[w] = true;
                stack.push((w, 0));
            } else {
                order.push(v);
            }
        }
    }
    let mut comp = vec![usize::MAX; m];
    let mut out = Vec::new();
    for &s in order.iter().rev() {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![s];
        comp[s] = id;
        let mut k = 0;
        while k < members.len() {
            let v = members[k];
            for u in 0..m {
                if a.get(u, v) > 0 && comp[u] == usize::MAX {
                    comp[u] = id;
                    members.push(u);
                }
            }
            k += 1;
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// Spectral radius and entropy `log ρ`. Irreducible blocks are handled
/// through `B + I`, which is primitive, when plain iteration stalls.
pub fn spectral_radius(a: &TransitionMatrix, tol: f64) -> Result<SpectralResult> {
    let (rho, iterations, residual, ok) = power_iteration(a, 0.0, tol);
    if ok {
        return Ok(SpectralResult {
            rho,
            entropy: rho.ln(),
            iterations,
            residual,
            fallback: false,
        });
    }
    let mut best = 0.0f64;
    let mut total = iterations;
    for c in components(a) {
        let b = a.submatrix(&c);
        if c.len() == 1 && b.get(0, 0) == 0 {
            continue;
        }
        let (r, it, _, ok) = power_iteration(&b, 1.0, tol);
        total += it;
        if !ok {
            return Err(Error::NoConvergence {
                iterations: total,
                change: f64::NAN,
            });
        }
        best = best.max(r - 1.0);
    }
    Ok(SpectralResult {
        rho: best,
        entropy: best.ln(),
        iterations: total,
        residual: f64::NAN,
        fallback: true,
    })
}

fn mat_mul_exact(a: &[u128], b: &[u128], m: usize) -> Result<Vec<u128>> {
    let mut out = vec![0u128; m * m];
    for i in 0..m {
        for k in 0..m {
            let x = a[i * m + k];
            if x == 0 {
                continue;
            }
            for j in 0..m {
                let p = x.checked_mul(b[k * m + j]).ok_or(Error::Overflow)?;
                out[i * m + j] = out[i * m + j].checked_add(p).ok_or(Error::Overflow)?;
            }
        }
    }
    Ok(out)
}

/// `Aⁿ` in exact integer arithmetic.
pub fn matrix_power(a: &TransitionMatrix, n: u32) -> Result<Vec<u128>> {
    let m = a.size();
    let mut result: Vec<u128> = (0..m * m).map(|k| u128::from(k / m == k % m)).collect();
    let mut base: Vec<u128> = a.entries.iter().map(|e| *e as u128).collect();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = mat_mul_exact(&result, &base, m)?;
        }
        e >>= 1;
        if e > 0 {
            base = mat_mul_exact(&base, &base, m)?;
        }
    }
    Ok(result)
}

/// `tr(Aⁿ)`, the number of period-`n` points of the subshift.
pub fn trace_count(a: &TransitionMatrix, n: u32) -> Result<u128> {
    let p = matrix_power(a, n)?;
    let m = a.size();
    (0..m).try_fold(0u128, |s, i| s.checked_add(p[i * m + i]).ok_or(Error::Overflow))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicCount {
    pub n: u32,
    pub trace: u128,
    pub brute: u128,
}

/// Depth-first walk over admissible cyclic words of length `n`; `visit` gets
/// each word with its weight (product of entries).
fn enumerate_cycles(a: &TransitionMatrix, n: usize, visit: &mut dyn FnMut(&[usize], u128)) {
    fn go(
        a: &TransitionMatrix,
        n: usize,
        word: &mut Vec<usize>,
        weight: u128,
        visit: &mut dyn FnMut(&[usize], u128),
    ) {
        let last = *word.last().unwrap();
        if word.len() == n {
            let w = a.get(last, word[0]) as u128;
            if w > 0 {
                visit(word, weight * w);
            }
            return;
        }
        for j in 0..a.size() {
            let e = a.get(last, j) as u128;
            if e > 0 {
                word.push(j);
                go(a, n, word, weight * e, visit);
                word.pop();
            }
        }
    }
    let mut word = Vec::with_capacity(n);
    for s in 0..a.size() {
        word.push(s);
        go(a, n, &mut word, 1, visit);
        word.pop();
    }
}

fn check_budget(a: &TransitionMatrix, n: u32, budget: u128, trace: u128) -> Result<()> {
    let words = (a.size() as u128).checked_pow(n);
    match words {
        Some(w) if w <= budget => Ok(()),
        _ => Err(Error::CapExceeded { trace }),
    }
}

/// Period-`n` count by trace and by enumeration of cyclic words.
pub fn count_periodic(a: &TransitionMatrix, n: u32, budget: u128) -> Result<PeriodicCount> {
    if n == 0 {
        return Err(Error::Validation("period must be at least 1".into()));
    }
    let trace = trace_count(a, n)?;
    check_budget(a, n, budget, trace)?;
    let mut brute = 0u128;
    enumerate_cycles(a, n as usize, &mut |_, w| brute += w);
    Ok(PeriodicCount { n, trace, brute })
}

/// Frequency of each symbol over all period-`n` points, by enumeration.
pub fn periodic_symbol_frequencies(a: &TransitionMatrix, n: u32, budget: u128) -> Result<Vec<f64>> {
    let trace = trace_count(a, n)?;
    check_budget(a, n, budget, trace)?;
    let mut counts = vec![0u128; a.size()];
    let mut total = 0u128;
    enumerate_cycles(a, n as usize, &mut |word, w| {
        for &s in word {
            counts[s] += w;
        }
        total += w * word.len() as u128;
    });
    Ok(counts.iter().map(|c| *c as f64 / total as f64).collect())
}

/// `(1/n)·log tr(Aⁿ)` for `n = 1..=n_max`.
pub fn growth_rates(a: &TransitionMatrix, n_max: u32) -> Result<Vec<f64>> {
    (1..=n_max)
        .map(|n| Ok((trace_count(a, n)? as f64).ln() / n as f64))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Irreducibility {
    pub irreducible: bool,
    pub aperiodic: bool,
    /// Gcd of cycle lengths; only defined for irreducible matrices.
    pub period: Option<usize>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn check_irreducible_aperiodic(a: &TransitionMatrix) -> Irreducibility {
    let m = a.size();
    let reach = |forward: bool| {
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for w in 0..m {
                let e = if forward { a.get(v, w) } else { a.get(w, v) };
                if e > 0 && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.iter().all(|s| *s)
    };
    if !(reach(true) && reach(false)) {
        return Irreducibility {
            irreducible: false,
            aperiodic: false,
            period: None,
        };
    }
    let mut level = vec![usize::MAX; m];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        for w in a.successors(v).collect::<Vec<_>>() {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let mut g = 0;
    for v in 0..m {
        for w in a.successors(v) {
            g = gcd(g, (level[v] + 1).abs_diff(level[w]));
        }
    }
    Irreducibility {
        irreducible: true,
        aperiodic: g == 1,
        period: Some(g),
    }
}

/// Random admissible window on `[lo, hi]`, one uniform step at a time.
pub fn random_admissible_window<R: Rng>(
    a: &TransitionMatrix,
    lo: i64,
    hi: i64,
    rng: &mut R,
) -> Result<SymbolWindow> {
    let starts: Vec<usize> = (0..a.size()).filter(|&i| a.successors(i).next().is_some()).collect();
    if starts.is_empty() {
        return Err(Error::Validation("matrix has no transitions".into()));
    }
    let mut s = vec![starts[rng.random_range(0..starts.len())]];
    for _ in lo..hi {
        let succ: Vec<usize> = a.successors(*s.last().unwrap()).collect();
        if succ.is_empty() {
            return Err(Error::Validation("walk reached a symbol without successors".into()));
        }
        s.push(succ[rng.random_range(0..succ.len())]);
    }
    Ok(SymbolWindow::new(s, lo))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub point: Point2,
    /// Diameter of `K_N(a)`.
    pub diameter: f64,
    /// `C·λᴺ·diam ℛ`.
    pub accuracy: f64,
    pub s: Interval,
    pub u: Interval,
}

fn box_intersect(a: (Interval, Interval), b: (Interval, Interval)) -> (Interval, Interval) {
    (a.0.intersect(&b.0), a.1.intersect(&b.1))
}

fn box_empty(b: &(Interval, Interval)) -> bool {
    b.0.is_empty() || b.1.is_empty()
}

/// `K_N(a) = ⋂_{|n|≤N} f^{-n}(R_{a_n})`: its centre, diameter and the
/// coding accuracy bound.
pub fn decode(model: &SystemModel, partition: &Partition, w: &SymbolWindow, n: usize) -> Result<Decoded> {
    let nn = n as i64;
    if !w.covers(-nn, nn) {
        return Err(Error::WindowTooShort { needed: n });
    }
    check_alphabet(w, partition.len())?;
    let sym = |j: i64| w.get(j).unwrap();
    let accuracy = DEFAULT_CODING_CONSTANT * model.data.lambda.powi(n as i32) * partition.diameter();
    let Some(branches) = model.horseshoe_branches() else {
        return decode_sampled(model, partition, w, n, accuracy);
    };
    let strip = |id: usize| -> Result<usize> {
        partition
            .strip_of(model, id)
            .ok_or_else(|| Error::UnsupportedModel("rectangle straddles both strips".into()))
    };
    let rect = |id: usize| partition.rectangles[id].as_box();
    // Future half: R_{a_n} ∩ f^{-1}(R_{a_{n+1}} ∩ …).
    let mut fut = rect(sym(nn));
    for j in (0..nn).rev() {
        let b = &branches[strip(sym(j))?];
        let (lo, hi) = b.image_x();
        let s = fut.0.intersect(&Interval::new(lo, hi));
        let pre = (
            s.affine(1.0 / b.x_scale, -b.x_shift / b.x_scale),
            fut.1.affine(1.0 / b.y_scale, -b.y_shift / b.y_scale),
        );
        fut = box_intersect(rect(sym(j)), pre);
        if box_empty(&fut) {
            return Err(Error::EmptyIntersection { index: j });
        }
    }
    // Past half: R_{a_0} ∩ f(R_{a_{-1}} ∩ f(…)).
    let mut past = rect(sym(-nn));
    for j in (-nn + 1)..=0 {
        let b = &branches[strip(sym(j - 1))?];
        let img = (
            past.0.affine(b.x_scale, b.x_shift),
            past.1.affine(b.y_scale, b.y_shift),
        );
        past = box_intersect(rect(sym(j)), img);
        if box_empty(&past) {
            return Err(Error::EmptyIntersection { index: j });
        }
    }
    let k = box_intersect(fut, past);
    if box_empty(&k) {
        return Err(Error::EmptyIntersection { index: 0 });
    }
    Ok(Decoded {
        point: Point2::plane(k.0.mid(), k.1.mid()),
        diameter: k.0.len().max(k.1.len()),
        accuracy,
        s: k.0,
        u: k.1,
    })
}

/// Point-cloud version for non-affine models: grid samples of `R_{a_0}`
/// whose orbits follow the window, summarised by their bounding box.
fn decode_sampled(
    model: &SystemModel,
    partition: &Partition,
    w: &SymbolWindow,
    n: usize,
    accuracy: f64,
) -> Result<Decoded> {
    let nn = n as i64;
    let r0 = &partition.rectangles[w.get(0).unwrap()];
    let g = 96;
    let mut hits: Vec<Point2> = Vec::new();
    for i in 0..g {
        for k in 0..g {
            let s = r0.s.lo + r0.s.len() * (i as f64 + 0.5) / g as f64;
            let u = r0.u.lo + r0.u.len() * (k as f64 + 0.5) / g as f64;
            let p = model.point(s, u);
            let follows = (-nn..=nn).all(|j| {
                model
                    .iterate(&p, j)
                    .map(|q| partition.rectangles[w.get(j).unwrap()].contains(&q, PARTITION_MARGIN))
                    .unwrap_or(false)
            });
            if follows {
                hits.push(p);
            }
        }
    }
    if hits.is_empty() {
        return Err(Error::EmptyIntersection { index: 0 });
    }
    let s = hits.iter().fold(Interval::new(f64::INFINITY, f64::NEG_INFINITY), |i, p| {
        Interval::new(i.lo.min(p.x), i.hi.max(p.x))
    });
    let u = hits.iter().fold(Interval::new(f64::INFINITY, f64::NEG_INFINITY), |i, p| {
        Interval::new(i.lo.min(p.y), i.hi.max(p.y))
    });
    Ok(Decoded {
        point: model.point(s.mid(), u.mid()),
        diameter: s.len().max(u.len()),
        accuracy,
        s,
        u,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Itinerary {
    pub window: SymbolWindow,
    /// Indices where the iterate sat on an inner rectangle boundary and the
    /// lowest-index rectangle was chosen.
    pub flagged: Vec<i64>,
}

/// `a_j` = index of the rectangle containing `f^j(x)` for `|j| ≤ N`.
pub fn itinerary(model: &SystemModel, partition: &Partition, x: &Point2, n: usize) -> Result<Itinerary> {
    let orbit = model.snapped_orbit(x, n, n)?;
    let hull = partition.hull();
    let mut symbols = Vec::with_capacity(orbit.len());
    let mut flagged = Vec::new();
    for (k, p) in orbit.iter().enumerate() {
        let j = k as i64 - n as i64;
        let id = partition
            .locate(p, PARTITION_MARGIN)
            .ok_or(Error::OutsidePartition { index: j })?;
        if partition.rectangles[id].on_inner_boundary(p, &hull, PARTITION_MARGIN) {
            flagged.push(j);
        }
        symbols.push(id);
    }
    Ok(Itinerary {
        window: SymbolWindow::new(symbols, -(n as i64)),
        flagged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub samples: usize,
    pub n: usize,
    pub bound: f64,
    pub max_residual: f64,
    pub passed: usize,
    pub residuals: Vec<f64>,
    pub all_pass: bool,
}

/// Checks `d(π(σa), f(π(a))) ≤ 2·accuracy(N)` on random admissible windows.
pub fn verify_conjugacy(
    model: &SystemModel,
    partition: &Partition,
    samples: usize,
    n: usize,
    seed: u64,
) -> Result<ConjugacyReport> {
    let a = crate::partition::transition_matrix(model, partition);
    let nn = n as i64;
    let residuals = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
            let w = random_admissible_window(&a, -nn - 1, nn + 1, &mut rng)?;
            let x = decode(model, partition, &w, n)?;
            let y = decode(model, partition, &w.shifted(), n)?;
            let fx = model.forward(&x.point)?;
            Ok((y.point.distance(&fx), 2.0 * x.accuracy))
        })
        .collect::<Result<Vec<_>>>()?;
    let bound = residuals.first().map(|r| r.1).unwrap_or(0.0);
    let res: Vec<f64> = residuals.iter().map(|r| r.0).collect();
    let passed = res.iter().filter(|r| **r <= bound).count();
    Ok(ConjugacyReport {
        samples,
        n,
        bound,
        max_residual: res.iter().cloned().fold(0.0, f64::max),
        passed,
        all_pass: passed == samples,
        residuals: res,
    })
}
