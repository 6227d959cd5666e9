//! The horseshoe constants table, each row next to its published value.

use crate::constants::{adapted_metric_constant, build_report, grid_resolution_for_accuracy, shadowing_tolerance, ReportTargets};
use crate::error::Result;
use crate::maps::SystemModel;
use crate::partition::{base_partition, refine_rounds, RefineMode, DEFAULT_RECTANGLE_CAP};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

/// Coding accuracy of the grid row.
pub const GRID_DELTA: f64 = 1e-6;
pub const PUBLISHED_K: f64 = 1.5;
pub const PUBLISHED_RATIO: f64 = 4.0 / 9.0;
pub const PUBLISHED_GRID: (u32, u64) = (14, 16384);
pub const DIAMETER_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub quantity: String,
    pub computed: String,
    pub published: String,
    pub tolerance: String,
    pub matches: bool,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeTable {
    pub rows: Vec<TableRow>,
    pub all_match: bool,
    pub model: String,
}

fn row(quantity: &str, computed: String, published: &str, tolerance: &str, matches: bool, note: String) -> TableRow {
    TableRow {
        quantity: quantity.into(),
        computed,
        published: published.into(),
        tolerance: tolerance.into(),
        matches,
        note,
    }
}

fn to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Rates `λ = 1/3`, `c = 1`, `C = 3/2` are exact rationals here; the closed
/// forms are evaluated in rational arithmetic so exact rows compare exactly.
pub fn horseshoe_table() -> Result<HorseshoeTable> {
    let model = SystemModel::horseshoe();
    let lambda = Ratio::new(1i64, 3);
    let c = Ratio::from_integer(1i64);
    let big_c = Ratio::new(3i64, 2);
    let one = Ratio::from_integer(1i64);
    let mut rows = Vec::new();

    let k = to_f64(c / (one - lambda));
    let k_float = adapted_metric_constant(1.0, 1.0 / 3.0, 1.0)?;
    rows.push(row(
        "adapted metric K",
        format!("{k}"),
        "1.5",
        "exact",
        k == PUBLISHED_K,
        format!("c/(1-lambda) with c = 1; floating-point evaluation gives {k_float:.17}"),
    ));

    let rep = build_report(&model.data, &ReportTargets::default())?;
    let eps_ok = rep.c0_clamped && rep.eps0.is_finite() && rep.eps0 > 0.0;
    rows.push(row(
        "stable manifold size eps0",
        format!("{:.6}", rep.eps0),
        ">= (2/3)/(2 |D^2 f|), unbounded for an affine map",
        "finite and positive after clamping",
        eps_ok,
        format!(
            "C0 = 0 for the affine model, clamped to {} (clamped = {}); eps0 = (1-lambda)^2/(4 C0)",
            rep.c0_used, rep.c0_clamped
        ),
    ));

    let ratio = to_f64((one - lambda) / big_c);
    let ratio_float = shadowing_tolerance(1.5, 1.0 / 3.0, 1.0)?;
    rows.push(row(
        "shadowing ratio alpha/beta",
        format!("{ratio}"),
        "4/9",
        "exact",
        ratio == PUBLISHED_RATIO,
        format!("(1-lambda)/C with C = 3/2; floating-point evaluation gives {ratio_float:.17}"),
    ));

    let base = base_partition(&model)?;
    let mut worst = 0.0f64;
    let mut last = (0, 0.0);
    for kk in 1..=PUBLISHED_GRID.0 as usize {
        let p = refine_rounds(&model, &base, kk, RefineMode::Pushforward, DEFAULT_RECTANGLE_CAP)?;
        let law = 3f64.powi(-(kk as i32));
        worst = worst.max((p.s_diameter() / law - 1.0).abs());
        last = (p.len(), p.s_diameter());
    }
    rows.push(row(
        "partition diameter after k = 14 refinements",
        format!("{:.17e}", last.1),
        "3^-k",
        "relative 1e-12",
        worst <= DIAMETER_TOL,
        format!(
            "stable extent under refinement by forward images; worst relative error over k = 1..14 is {worst:.3e}; the refined partition has {} rectangles",
            last.0
        ),
    ));

    let g = grid_resolution_for_accuracy(GRID_DELTA)?;
    rows.push(row(
        "grid resolution (k, count) at delta = 1e-6",
        format!("({}, {})", g.k, g.rectangle_count),
        "(14, 16384)",
        "exact",
        (g.k, g.rectangle_count) == PUBLISHED_GRID,
        "smallest k with 3^-k <= 4 delta/9; count 2^k".into(),
    ));

    let all_match = rows.iter().all(|r| r.matches);
    Ok(HorseshoeTable {
        rows,
        all_match,
        model: "affine horseshoe (x/3, 3y) and (x/3 + 2/3, 3y - 2); one realization of the stated rates".into(),
    })
}
