//! Oracles that share no code with the library algorithms.

#![allow(dead_code)]

use hypdyn::geometry::{Point2, Vec2};
use hypdyn::shadowing::PseudoOrbit;
use std::collections::BTreeSet;

pub const PHI: f64 = 1.618_033_988_749_895;

/// Cat map eigendata: stable and unstable unit vectors and eigenvalues.
pub fn cat_eigen() -> (Vec2, Vec2, f64, f64) {
    let n_s = (1.0 + PHI * PHI).sqrt();
    let n_u = (1.0 + 1.0 / (PHI * PHI)).sqrt();
    (
        Vec2::new(1.0 / n_s, -PHI / n_s),
        Vec2::new(1.0 / n_u, 1.0 / (PHI * n_u)),
        1.0 / (PHI * PHI),
        PHI * PHI,
    )
}

fn wrap(d: f64) -> f64 {
    d - d.round()
}

pub fn cat(p: &Point2) -> Point2 {
    Point2::torus(2.0 * p.x + p.y, p.x + p.y)
}

/// Shadow of a cat-map pseudo-orbit by solving the linearised error
/// recursion directly: stable error zero at the start, unstable error zero
/// at the end.
pub fn linear_correction_shadow(po: &PseudoOrbit) -> Vec<Point2> {
    let (vs, vu, ls, lu) = cat_eigen();
    let y = &po.points;
    let n = y.len();
    let det = vs.x * vu.y - vs.y * vu.x;
    let split = |e: Vec2| ((e.x * vu.y - e.y * vu.x) / det, (vs.x * e.y - vs.y * e.x) / det);
    let eta: Vec<(f64, f64)> = (0..n - 1)
        .map(|k| {
            let f = cat(&y[k]);
            split(Vec2::new(wrap(y[k + 1].x - f.x), wrap(y[k + 1].y - f.y)))
        })
        .collect();
    let mut s = vec![0.0; n];
    for k in 0..n - 1 {
        s[k + 1] = ls * s[k] - eta[k].0;
    }
    let mut u = vec![0.0; n];
    for k in (0..n - 1).rev() {
        u[k] = (u[k + 1] + eta[k].1) / lu;
    }
    (0..n)
        .map(|k| {
            Point2::torus(
                y[k].x + s[k] * vs.x + u[k] * vu.x,
                y[k].y + s[k] * vs.y + u[k] * vu.y,
            )
        })
        .collect()
}

fn mat_pow(a: [[i64; 2]; 2], n: u32) -> [[i64; 2]; 2] {
    let mut r = [[1, 0], [0, 1]];
    for _ in 0..n {
        r = [
            [r[0][0] * a[0][0] + r[0][1] * a[1][0], r[0][0] * a[0][1] + r[0][1] * a[1][1]],
            [r[1][0] * a[0][0] + r[1][1] * a[1][0], r[1][0] * a[0][1] + r[1][1] * a[1][1]],
        ];
    }
    r
}

/// All `p ∈ [0,1)²` with `(Aⁿ − I)p ∈ ℤ²`, as exact fractions `(i/d, j/d)`.
pub fn lattice_periodic_points(a: [[i64; 2]; 2], n: u32) -> (i64, Vec<(i64, i64)>) {
    let m = mat_pow(a, n);
    let b = [[m[0][0] - 1, m[0][1]], [m[1][0], m[1][1] - 1]];
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let d = det.abs();
    // p = adj(B)·k / det for integer k; residues mod 1 are the classes mod d.
    let mut set = BTreeSet::new();
    for k0 in 0..d {
        for k1 in 0..d {
            let i = (b[1][1] * k0 - b[0][1] * k1) * det.signum();
            let j = (-b[1][0] * k0 + b[0][0] * k1) * det.signum();
            set.insert((i.rem_euclid(d), j.rem_euclid(d)));
        }
    }
    (d, set.into_iter().collect())
}

/// `x = Σ 2a₋ₖ3⁻ᵏ`, `y = Σ 2aₖ3⁻⁽ᵏ⁺¹⁾` for a symbol function on `[-n, n]`.
pub fn horseshoe_coding(a: impl Fn(i64) -> usize, n: i64) -> (f64, f64) {
    let mut x = 0.0;
    for k in (1..=n).rev() {
        x = (x + 2.0 * a(-k) as f64) / 3.0;
    }
    let mut y = 0.0;
    for k in (0..=n).rev() {
        y = (y + 2.0 * a(k) as f64) / 3.0;
    }
    (x, y)
}

/// Counts cyclic words `w` of length `n` with `A[w_i][w_{i+1 mod n}] > 0`
/// by plain enumeration of all `mⁿ` words.
pub fn brute_cyclic_words(a: &[Vec<u64>], n: u32) -> u128 {
    let m = a.len();
    let total = (m as u128).pow(n);
    let mut count = 0u128;
    let mut w = vec![0usize; n as usize];
    for mut code in 0..total {
        for slot in w.iter_mut() {
            *slot = (code % m as u128) as usize;
            code /= m as u128;
        }
        let mut weight = 1u128;
        for i in 0..n as usize {
            weight *= a[w[i]][w[(i + 1) % n as usize]] as u128;
            if weight == 0 {
                break;
            }
        }
        count += weight;
    }
    count
}
