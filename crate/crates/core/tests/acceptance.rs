//! One PASS/FAIL line per acceptance criterion.

mod common;

use common::*;
use hypdyn::constants::{graph_contraction_rate, leafwise_rate, shadowing_accuracy};
use hypdyn::geometry::{Point2, Vec2};
use hypdyn::manifold::{manifold_in_chart, pair_contraction, Chart, ManifoldConfig, ManifoldKind};
use hypdyn::maps::SystemModel;
use hypdyn::partition::{
    base_partition, corrupted, refine_rounds, transition_matrix, verify_markov, RefineMode, DEFAULT_RECTANGLE_CAP,
};
use hypdyn::reproduce::horseshoe_table;
use hypdyn::shadowing::{anosov_close, noisy_orbit, shadow_batch, ClosingConfig, ShadowConfig};
use hypdyn::symbolic::{
    check_irreducible_aperiodic, count_periodic, decode, itinerary, periodic_symbol_frequencies,
    spectral_radius, verify_conjugacy, SymbolWindow, TransitionMatrix, DEFAULT_BRUTE_BUDGET,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, bad: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(bad.into())
    }
}

fn c1_constants() -> Outcome {
    let t = horseshoe_table().map_err(|e| e.to_string())?;
    let mut bad = Vec::new();
    for r in &t.rows {
        if !r.matches {
            bad.push(format!("{}: {} vs {}", r.quantity, r.computed, r.published));
        }
    }
    let summary: Vec<String> = t.rows.iter().map(|r| r.computed.clone()).collect();
    check(bad.is_empty(), summary.join("; "), bad.join("; "))
}

fn c2_entropy() -> Outcome {
    let m = SystemModel::horseshoe();
    let base = base_partition(&m).map_err(|e| e.to_string())?;
    let a = transition_matrix(&m, &base);
    let h = spectral_radius(&a, 1e-14).map_err(|e| e.to_string())?.entropy;
    let words6 = refine_rounds(&m, &base, 5, RefineMode::Pushforward, DEFAULT_RECTANGLE_CAP).map_err(|e| e.to_string())?;
    let a6 = transition_matrix(&m, &words6);
    let h6 = spectral_radius(&a6, 1e-14).map_err(|e| e.to_string())?.entropy;
    let ln2 = 2f64.ln();
    check(
        (h - ln2).abs() <= 1e-12 && (h6 - ln2).abs() <= 1e-10 && a6.size() == 64 && a6 == TransitionMatrix::de_bruijn(2, 6),
        format!("h = {h:.15}, h(64 symbols) = {h6:.15}"),
        format!("h = {h}, h6 = {h6}, size {}", a6.size()),
    )
}

fn c3_periodic_counts() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mats = vec![TransitionMatrix::full_shift(2)];
    while mats.len() < 11 {
        let bits: Vec<u64> = (0..9).map(|_| u64::from(rng.random_bool(0.6))).collect();
        let a = TransitionMatrix::from_fn(3, |i, j| bits[3 * i + j]);
        if check_irreducible_aperiodic(&a).irreducible {
            mats.push(a);
        }
    }
    for a in &mats {
        for n in 1..=12 {
            let c = count_periodic(a, n, DEFAULT_BRUTE_BUDGET).map_err(|e| e.to_string())?;
            let oracle = brute_cyclic_words(&a.rows(), n);
            if c.trace != oracle || c.brute != oracle {
                return Err(format!("{:?} n={n}: trace {} dfs {} enumeration {oracle}", a.rows(), c.trace, c.brute));
            }
        }
    }
    Ok(format!("{} matrices, n = 1..12, all exact", mats.len()))
}

fn c4_stable_manifold() -> Outcome {
    let m = SystemModel::cat_map();
    let x = Point2::torus(0.0, 0.0);
    let chart = Chart::axis(&m, &x, 0.05).map_err(|e| e.to_string())?;
    let r = manifold_in_chart(&m, &chart, ManifoldKind::Stable, &ManifoldConfig::default()).map_err(|e| e.to_string())?;
    // Ambient points must lie on y = −φ x.
    let err = r
        .graph
        .table()
        .iter()
        .map(|(_, _, p)| {
            let d = x.displacement_to(p);
            (d.y + PHI * d.x).abs() / (1.0 + PHI * PHI).sqrt()
        })
        .fold(0.0, f64::max);
    let d = &m.data;
    let theta = graph_contraction_rate(d.lambda, d.c1, 0.05, d.k_lip).map_err(|e| e.to_string())?;
    let ratio = r.max_ratio();
    check(
        r.converged && err <= 1e-9 && ratio <= theta * 1.05,
        format!("sup error {err:.2e}, max step ratio {ratio:.4} <= 1.05 theta = {:.4}", 1.05 * theta),
        format!("converged {}, error {err:e}, ratio {ratio} vs theta {theta}", r.converged),
    )
}

fn c5_leafwise() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let hs = SystemModel::horseshoe();
    let lp_h = leafwise_rate(hs.data.lambda);
    let mut worst_eq = 0.0f64;
    for x in hs.sample_invariant_set(100, &mut rng) {
        // The stable leaf through x is horizontal.
        let s = rng.random_range(-0.3..0.3);
        let y = Point2::plane((x.x + s).clamp(0.0, 1.0), x.y);
        let r = pair_contraction(&hs, &x, &y, 10).map_err(|e| e.to_string())?;
        for (k, v) in r.iter().enumerate() {
            if *v > lp_h.powi(k as i32) {
                return Err(format!("horseshoe ratio {v} > lambda'^{k}"));
            }
            worst_eq = worst_eq.max((v - 3f64.powi(-(k as i32))).abs());
        }
    }
    let cat = SystemModel::cat_map();
    let lp_c = leafwise_rate(cat.data.lambda);
    let (vs, _, _, _) = cat_eigen();
    let mut worst_cat = 0.0f64;
    for _ in 0..100 {
        let x = Point2::torus(rng.random(), rng.random());
        let chart = Chart::eigen(&cat, &x, 0.05).map_err(|e| e.to_string())?;
        let g = manifold_in_chart(&cat, &chart, ManifoldKind::Stable, &ManifoldConfig::default()).map_err(|e| e.to_string())?;
        let y = g.graph.ambient(rng.random_range(-0.05..0.05));
        let dir = x.displacement_to(&y);
        if (dir.x * vs.y - dir.y * vs.x).abs() > 1e-12 {
            return Err("cat manifold point off the stable line".into());
        }
        let r = pair_contraction(&cat, &x, &y, 10).map_err(|e| e.to_string())?;
        for (k, v) in r.iter().enumerate() {
            let bound = lp_c.powi(k as i32);
            if *v > bound {
                return Err(format!("cat ratio {v} > lambda'^{k} = {bound}"));
            }
            worst_cat = worst_cat.max(v / bound);
        }
    }
    check(
        worst_eq <= 1e-12,
        format!("horseshoe |ratio - 3^-k| <= {worst_eq:.1e}; cat max ratio/lambda'^k = {worst_cat:.3}"),
        format!("horseshoe deviation from 3^-k: {worst_eq:e}"),
    )
}

fn c6_shadowing() -> Outcome {
    let m = SystemModel::cat_map();
    let cfg = ShadowConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let starts: Vec<Point2> = (0..100).map(|_| Point2::torus(rng.random(), rng.random())).collect();
    let mut ratios = Vec::new();
    let mut worst_oracle = 0.0f64;
    let mut worst_bound = 0.0f64;
    for (decade, alpha) in [1e-6, 1e-5, 1e-4, 1e-3].into_iter().enumerate() {
        let orbits: Vec<_> = starts
            .iter()
            .enumerate()
            .map(|(i, s)| noisy_orbit(&m, s, 50, alpha, 1000 + i as u64))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let res = shadow_batch(&m, &orbits, &cfg, None);
        let mut sum = 0.0;
        for (po, r) in orbits.iter().zip(res) {
            let r = r.map_err(|e| e.to_string())?;
            let bound = shadowing_accuracy(cfg.constant, m.data.lambda, alpha);
            worst_bound = worst_bound.max(r.achieved_beta / bound);
            if decade == 2 {
                let oracle = linear_correction_shadow(po);
                let d = oracle
                    .iter()
                    .zip(&r.orbit)
                    .map(|(a, b)| a.distance(b))
                    .fold(0.0, f64::max);
                worst_oracle = worst_oracle.max(d);
            }
            sum += r.achieved_beta / alpha;
        }
        ratios.push(sum / orbits.len() as f64);
    }
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    let spread = hi / lo - 1.0;
    check(
        worst_oracle <= 1e-9 && worst_bound <= 1.0 && spread <= 0.10,
        format!(
            "oracle distance {worst_oracle:.1e}, max beta/bound {worst_bound:.3}, beta/alpha spread {:.2}%",
            100.0 * spread
        ),
        format!("oracle {worst_oracle:e}, beta/bound {worst_bound}, spread {spread}"),
    )
}

fn c7_closing_census() -> Outcome {
    let m = SystemModel::cat_map();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = Vec::new();
    for n in 1..=6u32 {
        let (d, pts) = lattice_periodic_points([[2, 1], [1, 1]], n);
        let mut recovered = Vec::new();
        for (i, j) in &pts {
            let p = Point2::torus(*i as f64 / d as f64, *j as f64 / d as f64);
            let x = p.translate(Vec2::new(rng.random_range(-1e-7..1e-7), rng.random_range(-1e-7..1e-7)));
            let c = anosov_close(&m, &x, n as usize, &ClosingConfig::default()).map_err(|e| e.to_string())?;
            if c.point.distance(&p) > 1e-9 {
                return Err(format!("n={n}: closed point {:?} is {:e} from {p:?}", c.point, c.point.distance(&p)));
            }
            recovered.push(c.point);
        }
        let distinct = (0..recovered.len())
            .filter(|&a| (0..a).all(|b| recovered[a].distance(&recovered[b]) > 1e-6))
            .count();
        if distinct as i64 != d || pts.len() as i64 != d {
            return Err(format!("n={n}: {distinct} distinct of |det| = {d}"));
        }
        counts.push(distinct);
    }
    check(
        counts == [1, 5, 16, 45, 121, 320],
        format!("counts {counts:?}"),
        format!("counts {counts:?}"),
    )
}

fn c8_coding() -> Outcome {
    let m = SystemModel::horseshoe();
    let p = base_partition(&m).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    let mut worst_closed = 0.0f64;
    for n in [5usize, 10, 15] {
        let nn = n as i64;
        for _ in 0..100 {
            let syms: Vec<usize> = (0..2 * n + 1).map(|_| rng.random_range(0..2)).collect();
            let w = SymbolWindow::new(syms, -nn);
            let d = decode(&m, &p, &w, n).map_err(|e| e.to_string())?;
            let bound = 1.5 * m.data.lambda.powi(n as i32) * p.diameter();
            worst = worst.max(d.diameter / bound);
            let (cx, cy) = horseshoe_coding(|j| w.get(j).unwrap(), nn);
            worst_closed = worst_closed.max(d.point.distance(&Point2::plane(cx, cy)) / bound);
            let it = itinerary(&m, &p, &d.point, n).map_err(|e| e.to_string())?;
            for j in -nn..=nn {
                if !it.flagged.contains(&j) && it.window.get(j) != w.get(j) {
                    return Err(format!("round trip differs at {j} for N = {n}"));
                }
            }
        }
        let conj = verify_conjugacy(&m, &p, 100, n, 80 + n as u64).map_err(|e| e.to_string())?;
        if !conj.all_pass {
            return Err(format!("conjugacy residual {} > {} at N = {n}", conj.max_residual, conj.bound));
        }
    }
    check(
        worst <= 1.0 && worst_closed <= 1.0,
        format!("max diameter/bound {worst:.3}, closed-form distance/bound {worst_closed:.3}, round trips exact"),
        format!("diameter/bound {worst}, closed form {worst_closed}"),
    )
}

fn c9_markov() -> Outcome {
    let m = SystemModel::horseshoe();
    let base = base_partition(&m).map_err(|e| e.to_string())?;
    for mode in [RefineMode::Pushforward, RefineMode::Pullback] {
        for k in 0..=8 {
            let p = refine_rounds(&m, &base, k, mode, DEFAULT_RECTANGLE_CAP).map_err(|e| e.to_string())?;
            let r = verify_markov(&m, &p, 16);
            if !r.pass {
                return Err(format!("{mode:?} k = {k}: {:?}", r.worst));
            }
        }
    }
    let bad = verify_markov(&m, &corrupted(&base, 0, 1.1), 16);
    let located = bad.worst.as_ref().map(|w| (w.rect, w.condition.clone(), w.margin));
    check(
        !bad.pass && located.is_some(),
        format!("base and k = 1..8 pass; corrupted fixture fails at {located:?}"),
        "corrupted fixture was not rejected",
    )
}

fn c10_equidistribution() -> Outcome {
    let f = periodic_symbol_frequencies(&TransitionMatrix::full_shift(2), 12, DEFAULT_BRUTE_BUDGET)
        .map_err(|e| e.to_string())?;
    check(
        f.iter().all(|v| (v - 0.5).abs() <= 1e-9),
        format!("frequencies {f:?}"),
        format!("frequencies {f:?}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 10] = [
        ("horseshoe constants reproduction", c1_constants, Some(Duration::from_secs(1))),
        ("entropy of the transition matrix", c2_entropy, Some(Duration::from_secs(1))),
        ("periodic counting", c3_periodic_counts, Some(Duration::from_secs(10))),
        ("stable manifold oracle", c4_stable_manifold, Some(Duration::from_secs(5))),
        ("leafwise contraction", c5_leafwise, None),
        ("shadowing oracle equivalence", c6_shadowing, Some(Duration::from_secs(10))),
        ("closing lemma census", c7_closing_census, None),
        ("coding accuracy", c8_coding, None),
        ("Markov verification", c9_markov, None),
        ("equidistribution smoke test", c10_equidistribution, None),
    ];
    let mut failures = 0;
    for (i, (name, f, limit)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let out = f();
        let dt = t.elapsed();
        let out = match (out, limit) {
            (Ok(msg), Some(l)) if dt > *l => Err(format!("{msg}; runtime {dt:.2?} exceeds {l:.0?}")),
            (o, _) => o,
        };
        match out {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{dt:.2?}]", i + 1),
            Err(msg) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {msg} [{dt:.2?}]", i + 1);
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
