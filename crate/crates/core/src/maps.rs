//! The dynamical-system interface, the built-in models, splitting estimation
//! and the cone criterion.

use crate::error::{Error, Result};
use crate::geometry::{Mat2, Point2, Space, Vec2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Slack allowed when deciding horseshoe strip membership.
pub const DOMAIN_SLACK: f64 = 1e-8;
/// Minimum admissible angle between stable and unstable directions.
pub const SPLITTING_TOL: f64 = 1e-9;
/// Default depth of the cocycle power iteration in [`estimate_splitting`].
pub const DEFAULT_SPLITTING_DEPTH: usize = 30;
/// Default central-difference step for tabulated models.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

/// Constants consumed by every formula of the toolkit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityData {
    pub lambda: f64,
    pub c: f64,
    pub mu_adapt: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "K_lip")]
    pub k_lip: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_inv")]
    pub l_inv: f64,
    pub beta_holder: f64,
    pub delta0: f64,
    /// Floor applied to `C0` before it is used in the manifold-size formula.
    pub c0_floor: f64,
}

impl HyperbolicityData {
    pub fn horseshoe() -> Self {
        Self {
            lambda: 1.0 / 3.0,
            c: 1.0,
            mu_adapt: 1.0,
            c0: 0.0,
            c1: 1.0,
            k_lip: 0.5,
            l: 3.0,
            l_inv: 3.0,
            beta_holder: 1.0,
            // The affine horseshoe has a global product structure on Λ.
            delta0: 2.0,
            c0_floor: 1e-3,
        }
    }

    /// Defaults for a hyperbolic toral automorphism with leading eigenvalue `rho`.
    pub fn toral(rho: f64) -> Self {
        Self {
            lambda: 1.0 / rho,
            c: 1.0,
            mu_adapt: 1.0,
            c0: 0.0,
            c1: 1.0,
            k_lip: 0.5,
            l: rho,
            l_inv: rho,
            beta_holder: 1.0,
            delta0: 0.1,
            c0_floor: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Validation(m.to_string()));
        let d = self;
        let finite = [
            d.lambda, d.c, d.mu_adapt, d.c0, d.c1, d.k_lip, d.l, d.l_inv, d.beta_holder, d.delta0,
            d.c0_floor,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return fail("all constants must be finite");
        }
        if !(d.lambda > 0.0 && d.lambda < 1.0) {
            return fail("lambda must lie in (0,1)");
        }
        if !(d.lambda < d.mu_adapt && d.mu_adapt <= 1.0) {
            return fail("need lambda < mu_adapt <= 1");
        }
        if d.c < 1.0 {
            return fail("c must be >= 1");
        }
        if d.l < 1.0 || d.l_inv < 1.0 {
            return fail("L and L_inv must be >= 1");
        }
        if !(d.beta_holder > 0.0 && d.beta_holder <= 1.0) {
            return fail("beta_holder must lie in (0,1]");
        }
        if d.c0 < 0.0 || d.c0_floor <= 0.0 {
            return fail("C0 must be >= 0 and the C0 floor > 0");
        }
        if d.c1 <= 0.0 || d.delta0 <= 0.0 {
            return fail("C1 and delta0 must be positive");
        }
        if !(d.k_lip > 0.0 && d.k_lip < 1.0) {
            return fail("K_lip must lie in (0,1)");
        }
        Ok(())
    }

    /// `C0` after the floor, and whether the floor was applied.
    pub fn effective_c0(&self) -> (f64, bool) {
        if self.c0 < self.c0_floor {
            (self.c0_floor, true)
        } else {
            (self.c0, false)
        }
    }

    /// Bracket distance constant `(1 - K)^{-1}`.
    pub fn bracket_constant(&self) -> f64 {
        1.0 / (1.0 - self.k_lip)
    }
}

/// One affine branch `(x, y) ↦ (x_scale·x + x_shift, y_scale·y + y_shift)` on
/// the horizontal strip `[0,1] × [y_lo, y_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorseshoeBranch {
    pub y_lo: f64,
    pub y_hi: f64,
    pub x_scale: f64,
    pub x_shift: f64,
    pub y_scale: f64,
    pub y_shift: f64,
}

impl HorseshoeBranch {
    pub fn apply(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            self.x_scale * p.x + self.x_shift,
            self.y_scale * p.y + self.y_shift,
        )
    }

    pub fn apply_inverse(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            (p.x - self.x_shift) / self.x_scale,
            (p.y - self.y_shift) / self.y_scale,
        )
    }

    /// The vertical strip `f(H)` in x.
    pub fn image_x(&self) -> (f64, f64) {
        let a = self.x_shift;
        let b = self.x_scale + self.x_shift;
        (a.min(b), a.max(b))
    }

    pub fn linear_part(&self) -> Mat2 {
        Mat2::diag(self.x_scale, self.y_scale)
    }
}

/// Forward map tabulated on a tensor grid, evaluated by bilinear interpolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Image x-coordinates, row-major with index `j * xs.len() + i`.
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
}

impl UserGrid {
    /// Tabulates `f` on a uniform `nx × ny` grid over the given box.
    pub fn tabulate(
        x_range: (f64, f64),
        y_range: (f64, f64),
        nx: usize,
        ny: usize,
        f: impl Fn(f64, f64) -> (f64, f64),
    ) -> Self {
        let lin = |r: (f64, f64), n: usize| -> Vec<f64> {
            (0..n)
                .map(|i| r.0 + (r.1 - r.0) * i as f64 / (n - 1) as f64)
                .collect()
        };
        let xs = lin(x_range, nx);
        let ys = lin(y_range, ny);
        let mut fx = Vec::with_capacity(nx * ny);
        let mut fy = Vec::with_capacity(nx * ny);
        for &y in &ys {
            for &x in &xs {
                let (a, b) = f(x, y);
                fx.push(a);
                fy.push(b);
            }
        }
        Self { xs, ys, fx, fy }
    }

    pub fn validate(&self) -> Result<()> {
        let (nx, ny) = (self.xs.len(), self.ys.len());
        if nx < 2 || ny < 2 {
            return Err(Error::Validation("grid needs at least 2x2 nodes".into()));
        }
        if self.fx.len() != nx * ny || self.fy.len() != nx * ny {
            return Err(Error::Validation("grid value count mismatch".into()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.xs) || !increasing(&self.ys) {
            return Err(Error::Validation("grid axes must be increasing".into()));
        }
        Ok(())
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.ys[0], *self.ys.last().unwrap())
    }

    fn locate(axis: &[f64], v: f64) -> Option<(usize, f64)> {
        let n = axis.len();
        let tol = 1e-12 * (axis[n - 1] - axis[0]).abs().max(1.0);
        if v < axis[0] - tol || v > axis[n - 1] + tol {
            return None;
        }
        let i = axis.partition_point(|&a| a <= v).clamp(1, n - 1) - 1;
        let t = (v - axis[i]) / (axis[i + 1] - axis[i]);
        Some((i, t))
    }

    /// Bilinear value and the exact cell gradient of the interpolant.
    fn eval_with_gradient(&self, p: Vec2) -> Option<(Vec2, Mat2)> {
        let (i, tx) = Self::locate(&self.xs, p.x)?;
        let (j, ty) = Self::locate(&self.ys, p.y)?;
        let nx = self.xs.len();
        let k = |ii: usize, jj: usize| jj * nx + ii;
        let hx = self.xs[i + 1] - self.xs[i];
        let hy = self.ys[j + 1] - self.ys[j];
        let comp = |v: &[f64]| {
            let (v00, v10, v01, v11) = (v[k(i, j)], v[k(i + 1, j)], v[k(i, j + 1)], v[k(i + 1, j + 1)]);
            let val = v00 * (1.0 - tx) * (1.0 - ty)
                + v10 * tx * (1.0 - ty)
                + v01 * (1.0 - tx) * ty
                + v11 * tx * ty;
            let dx = ((v10 - v00) * (1.0 - ty) + (v11 - v01) * ty) / hx;
            let dy = ((v01 - v00) * (1.0 - tx) + (v11 - v10) * tx) / hy;
            (val, dx, dy)
        };
        let (a, ax, ay) = comp(&self.fx);
        let (b, bx, by) = comp(&self.fy);
        Some((Vec2::new(a, b), Mat2::new(ax, ay, bx, by)))
    }

    pub fn eval(&self, p: Vec2) -> Option<Vec2> {
        self.eval_with_gradient(p).map(|(v, _)| v)
    }

    fn newton_inverse(&self, target: Vec2, start: Vec2) -> Option<Vec2> {
        let mut z = start;
        for _ in 0..60 {
            let (v, jac) = self.eval_with_gradient(z)?;
            let r = v - target;
            if r.norm_max() <= 1e-15 * (1.0 + target.norm_max()) {
                return Some(z);
            }
            let step = jac.inverse()?.apply(r);
            let next = z - step;
            let (x0, x1) = self.x_range();
            let (y0, y1) = self.y_range();
            z = Vec2::new(next.x.clamp(x0, x1), next.y.clamp(y0, y1));
            if step.norm_max() <= 1e-16 * (1.0 + z.norm_max()) {
                let (v, _) = self.eval_with_gradient(z)?;
                return ((v - target).norm_max() <= 1e-12).then_some(z);
            }
        }
        let (v, _) = self.eval_with_gradient(z)?;
        ((v - target).norm_max() <= 1e-12).then_some(z)
    }

    pub fn invert(&self, target: Vec2) -> Option<Vec2> {
        if let Some(z) = self.newton_inverse(target, target) {
            return Some(z);
        }
        // Fall back to the node whose image is nearest the target.
        let nx = self.xs.len();
        let best = (0..self.fx.len())
            .min_by(|&a, &b| {
                let da = Vec2::new(self.fx[a] - target.x, self.fy[a] - target.y).norm_max();
                let db = Vec2::new(self.fx[b] - target.x, self.fy[b] - target.y).norm_max();
                da.total_cmp(&db)
            })
            .unwrap();
        let start = Vec2::new(self.xs[best % nx], self.ys[best / nx]);
        self.newton_inverse(target, start)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    AffineHorseshoe { branches: [HorseshoeBranch; 2] },
    CatMap { matrix: [[i64; 2]; 2] },
    UserGrid(UserGrid),
}

/// A planar or toral diffeomorphism together with its declared constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub kind: ModelKind,
    pub data: HyperbolicityData,
    pub fd_step: f64,
}

fn default_branches() -> [HorseshoeBranch; 2] {
    [
        HorseshoeBranch {
            y_lo: 0.0,
            y_hi: 1.0 / 3.0,
            x_scale: 1.0 / 3.0,
            x_shift: 0.0,
            y_scale: 3.0,
            y_shift: 0.0,
        },
        HorseshoeBranch {
            y_lo: 2.0 / 3.0,
            y_hi: 1.0,
            x_scale: 1.0 / 3.0,
            x_shift: 2.0 / 3.0,
            y_scale: 3.0,
            y_shift: -2.0,
        },
    ]
}

/// Leading eigenvalue modulus of an integer 2×2 matrix, if it is hyperbolic
/// and unimodular.
fn toral_leading_eigenvalue(m: [[i64; 2]; 2]) -> Option<f64> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() != 1 {
        return None;
    }
    let tr = (m[0][0] + m[1][1]) as f64;
    let disc = tr * tr - 4.0 * det as f64;
    if disc <= 0.0 {
        return None;
    }
    let rho = (tr.abs() + disc.sqrt()) / 2.0;
    (rho > 1.0 + 1e-12).then_some(rho)
}

impl SystemModel {
    pub fn horseshoe() -> Self {
        Self {
            kind: ModelKind::AffineHorseshoe {
                branches: default_branches(),
            },
            data: HyperbolicityData::horseshoe(),
            fd_step: DEFAULT_FD_STEP,
        }
    }

    pub fn cat_map() -> Self {
        Self::toral([[2, 1], [1, 1]]).expect("the cat map is hyperbolic")
    }

    pub fn toral(matrix: [[i64; 2]; 2]) -> Result<Self> {
        let rho = toral_leading_eigenvalue(matrix).ok_or_else(|| {
            Error::Validation("toral matrix must be unimodular and hyperbolic".into())
        })?;
        Ok(Self {
            kind: ModelKind::CatMap { matrix },
            data: HyperbolicityData::toral(rho),
            fd_step: DEFAULT_FD_STEP,
        })
    }

    pub fn user_grid(grid: UserGrid, data: HyperbolicityData) -> Result<Self> {
        grid.validate()?;
        let m = Self {
            kind: ModelKind::UserGrid(grid),
            data,
            fd_step: DEFAULT_FD_STEP,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_data(mut self, data: HyperbolicityData) -> Self {
        self.data = data;
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ModelKind::AffineHorseshoe { .. } => "affine_horseshoe",
            ModelKind::CatMap { .. } => "cat_map",
            ModelKind::UserGrid(_) => "user_grid",
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        match &self.kind {
            ModelKind::AffineHorseshoe { branches } => {
                for b in branches {
                    if !(b.y_lo < b.y_hi) || b.x_scale <= 0.0 || b.x_scale >= 1.0 || b.y_scale <= 1.0
                    {
                        return Err(Error::Validation(
                            "horseshoe branch must contract x and expand y".into(),
                        ));
                    }
                }
                if branches[0].y_hi >= branches[1].y_lo {
                    return Err(Error::Validation("horseshoe strips must be disjoint and ordered".into()));
                }
                let (a0, a1) = branches[0].image_x();
                let (b0, _) = branches[1].image_x();
                if a1 >= b0 || a0 < -1e-12 {
                    return Err(Error::Validation("branch images must be disjoint vertical strips".into()));
                }
                Ok(())
            }
            ModelKind::CatMap { matrix } => toral_leading_eigenvalue(*matrix)
                .map(|_| ())
                .ok_or_else(|| Error::Validation("toral matrix must be unimodular and hyperbolic".into())),
            ModelKind::UserGrid(g) => g.validate(),
        }
    }

    pub fn space(&self) -> Space {
        match self.kind {
            ModelKind::CatMap { .. } => Space::Torus,
            _ => Space::Plane,
        }
    }

    pub fn point(&self, x: f64, y: f64) -> Point2 {
        Point2::new(x, y, self.space())
    }

    /// True when `Df` is the same matrix at every point.
    pub fn has_constant_derivative(&self) -> bool {
        match &self.kind {
            ModelKind::AffineHorseshoe { branches } => {
                branches[0].linear_part() == branches[1].linear_part()
            }
            ModelKind::CatMap { .. } => true,
            ModelKind::UserGrid(_) => false,
        }
    }

    pub fn horseshoe_branches(&self) -> Option<&[HorseshoeBranch; 2]> {
        match &self.kind {
            ModelKind::AffineHorseshoe { branches } => Some(branches),
            _ => None,
        }
    }

    /// Index of the horseshoe branch strip containing `p`.
    pub fn forward_branch(&self, p: &Point2) -> Option<usize> {
        let br = self.horseshoe_branches()?;
        if p.x < -DOMAIN_SLACK || p.x > 1.0 + DOMAIN_SLACK {
            return None;
        }
        br.iter()
            .position(|b| p.y >= b.y_lo - DOMAIN_SLACK && p.y <= b.y_hi + DOMAIN_SLACK)
    }

    /// Index of the horseshoe branch whose image strip contains `p`.
    pub fn inverse_branch(&self, p: &Point2) -> Option<usize> {
        let br = self.horseshoe_branches()?;
        if p.y < -DOMAIN_SLACK || p.y > 1.0 + DOMAIN_SLACK {
            return None;
        }
        br.iter().position(|b| {
            let (lo, hi) = b.image_x();
            p.x >= lo - DOMAIN_SLACK && p.x <= hi + DOMAIN_SLACK
        })
    }

    fn cat_matrix(&self) -> Option<Mat2> {
        match &self.kind {
            ModelKind::CatMap { matrix: m } => Some(Mat2::new(
                m[0][0] as f64,
                m[0][1] as f64,
                m[1][0] as f64,
                m[1][1] as f64,
            )),
            _ => None,
        }
    }

    fn cat_inverse_matrix(&self) -> Option<Mat2> {
        match &self.kind {
            ModelKind::CatMap { matrix: m } => {
                let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) as f64;
                Some(Mat2::new(
                    det * m[1][1] as f64,
                    -det * m[0][1] as f64,
                    -det * m[1][0] as f64,
                    det * m[0][0] as f64,
                ))
            }
            _ => None,
        }
    }

    fn grid_eval(&self, g: &UserGrid, p: &Point2) -> Result<Point2> {
        g.eval(p.coords())
            .map(|v| Point2::plane(v.x, v.y))
            .ok_or_else(|| Error::domain(format!("({}, {}) outside the tabulated grid", p.x, p.y)))
    }

    /// Evaluates `f`.
    pub fn forward(&self, p: &Point2) -> Result<Point2> {
        match &self.kind {
            ModelKind::AffineHorseshoe { branches } => {
                let i = self.forward_branch(p).ok_or_else(|| {
                    Error::domain(format!("({}, {}) lies in neither horseshoe strip", p.x, p.y))
                })?;
                let v = branches[i].apply(p.coords());
                Ok(Point2::plane(v.x, v.y))
            }
            ModelKind::CatMap { .. } => {
                let v = self.cat_matrix().unwrap().apply(p.coords());
                Ok(Point2::torus(v.x, v.y))
            }
            ModelKind::UserGrid(g) => self.grid_eval(g, p),
        }
    }

    /// Evaluates `f⁻¹`.
    pub fn inverse(&self, p: &Point2) -> Result<Point2> {
        match &self.kind {
            ModelKind::AffineHorseshoe { branches } => {
                let i = self.inverse_branch(p).ok_or_else(|| {
                    Error::domain(format!("({}, {}) lies in neither image strip", p.x, p.y))
                })?;
                let v = branches[i].apply_inverse(p.coords());
                Ok(Point2::plane(v.x, v.y))
            }
            ModelKind::CatMap { .. } => {
                let v = self.cat_inverse_matrix().unwrap().apply(p.coords());
                Ok(Point2::torus(v.x, v.y))
            }
            ModelKind::UserGrid(g) => g
                .invert(p.coords())
                .map(|v| Point2::plane(v.x, v.y))
                .ok_or_else(|| Error::domain(format!("({}, {}) has no preimage in the grid", p.x, p.y))),
        }
    }

    pub fn step(&self, p: &Point2, dir: Direction) -> Result<Point2> {
        match dir {
            Direction::Forward => self.forward(p),
            Direction::Backward => self.inverse(p),
        }
    }

    /// `fⁿ` (or `f⁻ⁿ` for negative `n`).
    pub fn iterate(&self, p: &Point2, n: i64) -> Result<Point2> {
        let dir = if n >= 0 {
            Direction::Forward
        } else {
            Direction::Backward
        };
        let mut q = *p;
        for _ in 0..n.unsigned_abs() {
            q = self.step(&q, dir)?;
        }
        Ok(q)
    }

    /// `Df(p)`.
    pub fn jacobian(&self, p: &Point2) -> Result<Mat2> {
        match &self.kind {
            ModelKind::AffineHorseshoe { branches } => {
                let i = self.forward_branch(p).ok_or_else(|| {
                    Error::domain(format!("({}, {}) lies in neither horseshoe strip", p.x, p.y))
                })?;
                Ok(branches[i].linear_part())
            }
            ModelKind::CatMap { .. } => Ok(self.cat_matrix().unwrap()),
            ModelKind::UserGrid(g) => {
                let h = self.fd_step;
                let f = |dx: f64, dy: f64| {
                    g.eval(Vec2::new(p.x + dx, p.y + dy)).ok_or_else(|| {
                        Error::domain(format!("({}, {}) too close to the grid edge", p.x, p.y))
                    })
                };
                let (xp, xm, yp, ym) = (f(h, 0.0)?, f(-h, 0.0)?, f(0.0, h)?, f(0.0, -h)?);
                let dx = (xp - xm) * (0.5 / h);
                let dy = (yp - ym) * (0.5 / h);
                Ok(Mat2::new(dx.x, dy.x, dx.y, dy.y))
            }
        }
    }

    /// `f` evaluated near `base` using the germ of `f` at `base`: for the
    /// horseshoe, the branch of `base` extended affinely beyond its strip.
    pub fn step_near(&self, base: &Point2, p: &Point2, dir: Direction) -> Result<Point2> {
        if let Some(br) = self.horseshoe_branches() {
            let i = match dir {
                Direction::Forward => self.forward_branch(base),
                Direction::Backward => self.inverse_branch(base),
            }
            .ok_or_else(|| Error::domain(format!("({}, {}) outside the model domain", base.x, base.y)))?;
            let v = match dir {
                Direction::Forward => br[i].apply(p.coords()),
                Direction::Backward => br[i].apply_inverse(p.coords()),
            };
            return Ok(Point2::plane(v.x, v.y));
        }
        self.step(p, dir)
    }

    /// Derivative of `step_near` at `p`.
    pub fn jacobian_near(&self, base: &Point2, p: &Point2, dir: Direction) -> Result<Mat2> {
        if let Some(br) = self.horseshoe_branches() {
            let i = match dir {
                Direction::Forward => self.forward_branch(base),
                Direction::Backward => self.inverse_branch(base),
            }
            .ok_or_else(|| Error::domain(format!("({}, {}) outside the model domain", base.x, base.y)))?;
            let m = br[i].linear_part();
            return Ok(match dir {
                Direction::Forward => m,
                Direction::Backward => m.inverse().unwrap(),
            });
        }
        match dir {
            Direction::Forward => self.jacobian(p),
            Direction::Backward => {
                let q = self.inverse(p)?;
                self.jacobian(&q)?
                    .inverse()
                    .ok_or_else(|| Error::domain("singular derivative"))
            }
        }
    }

    /// Moves a point that drifted off the horseshoe strips by rounding back
    /// onto the nearest strip; other models are returned unchanged.
    pub fn snap(&self, p: &Point2) -> Point2 {
        match self.horseshoe_branches() {
            Some(br) => {
                let x = p.x.clamp(0.0, 1.0);
                let b = br
                    .iter()
                    .min_by(|a, b| strip_gap(a, p.y).total_cmp(&strip_gap(b, p.y)))
                    .unwrap();
                Point2::plane(x, p.y.clamp(b.y_lo, b.y_hi))
            }
            None => *p,
        }
    }

    /// Orbit `f^{-back}(p), …, f^{fwd}(p)`, snapped back onto the horseshoe
    /// strips after each step so long cocycle products stay defined.
    pub fn snapped_orbit(&self, p: &Point2, back: usize, fwd: usize) -> Result<Vec<Point2>> {
        let guard = |q: Point2| -> Result<Point2> {
            let snapped = self.snap(&q);
            if self.horseshoe_branches().is_some() && q.distance(&snapped) > 1.0 / 6.0 {
                return Err(Error::domain("orbit left the horseshoe domain"));
            }
            Ok(snapped)
        };
        let mut past = Vec::with_capacity(back);
        let mut q = *p;
        for _ in 0..back {
            let img = match self.horseshoe_branches() {
                Some(br) => {
                    let s = self.snap_inverse(&q);
                    let i = self.inverse_branch(&s).ok_or_else(|| Error::domain("orbit left the domain"))?;
                    let v = br[i].apply_inverse(s.coords());
                    Point2::plane(v.x, v.y)
                }
                None => self.inverse(&q)?,
            };
            q = guard(img)?;
            past.push(q);
        }
        past.reverse();
        let mut orbit = past;
        orbit.push(*p);
        let mut q = *p;
        for _ in 0..fwd {
            let img = match self.horseshoe_branches() {
                Some(br) => {
                    let s = self.snap(&q);
                    let i = self.forward_branch(&s).ok_or_else(|| Error::domain("orbit left the domain"))?;
                    let v = br[i].apply(s.coords());
                    Point2::plane(v.x, v.y)
                }
                None => self.forward(&q)?,
            };
            q = guard(img)?;
            orbit.push(q);
        }
        Ok(orbit)
    }

    fn snap_inverse(&self, p: &Point2) -> Point2 {
        match self.horseshoe_branches() {
            Some(br) => {
                let y = p.y.clamp(0.0, 1.0);
                let gap = |b: &HorseshoeBranch| {
                    let (lo, hi) = b.image_x();
                    (lo - p.x).max(p.x - hi).max(0.0)
                };
                let b = br.iter().min_by(|a, b| gap(a).total_cmp(&gap(b))).unwrap();
                let (lo, hi) = b.image_x();
                Point2::plane(p.x.clamp(lo, hi), y)
            }
            None => *p,
        }
    }

    /// Random points of (or, for tabulated models, near) the invariant set.
    pub fn sample_invariant_set<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<Point2> {
        match &self.kind {
            ModelKind::AffineHorseshoe { branches } => (0..count)
                .map(|_| {
                    let past: Vec<u8> = (0..48).map(|_| rng.random_range(0..2u8)).collect();
                    let future: Vec<u8> = (0..48).map(|_| rng.random_range(0..2u8)).collect();
                    horseshoe_point(branches, &past, &future)
                })
                .collect(),
            ModelKind::CatMap { .. } => (0..count)
                .map(|_| Point2::torus(rng.random::<f64>(), rng.random::<f64>()))
                .collect(),
            ModelKind::UserGrid(g) => {
                let (x0, x1) = g.x_range();
                let (y0, y1) = g.y_range();
                let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
                let (hx, hy) = (0.4 * (x1 - x0), 0.4 * (y1 - y0));
                (0..count)
                    .map(|_| {
                        Point2::plane(
                            cx + hx * (2.0 * rng.random::<f64>() - 1.0),
                            cy + hy * (2.0 * rng.random::<f64>() - 1.0),
                        )
                    })
                    .collect()
            }
        }
    }

    /// Orbit `x_0, …, x_{len-1}` of a horseshoe point rebuilt from its
    /// symbol sequence, so rounding is not amplified by the expansion.
    pub fn horseshoe_orbit(&self, p: &Point2, len: usize) -> Result<Vec<Point2>> {
        const DEPTH: usize = 48;
        let br = self
            .horseshoe_branches()
            .ok_or_else(|| Error::domain("symbolic orbit needs the horseshoe"))?;
        let orbit = self.snapped_orbit(p, DEPTH, len + DEPTH)?;
        let symbols: Vec<u8> = orbit
            .iter()
            .map(|q| self.forward_branch(q).unwrap_or(0) as u8)
            .collect();
        Ok((0..len)
            .map(|k| {
                let t = DEPTH + k;
                let past: Vec<u8> = symbols[k..t].iter().rev().copied().collect();
                horseshoe_point(br, &past, &symbols[t..t + DEPTH])
            })
            .collect())
    }

    /// Invariant-set point with the given past `a_{-1}, a_{-2}, …` and future
    /// `a_0, a_1, …` (horseshoe only).
    pub fn horseshoe_point(&self, past: &[u8], future: &[u8]) -> Option<Point2> {
        self.horseshoe_branches()
            .map(|br| horseshoe_point(br, past, future))
    }
}

fn strip_gap(b: &HorseshoeBranch, y: f64) -> f64 {
    (b.y_lo - y).max(y - b.y_hi).max(0.0)
}

/// Point whose backward branch sequence is `past` and forward sequence is
/// `future`, found by composing contracting branch maps from the strip centres.
fn horseshoe_point(br: &[HorseshoeBranch; 2], past: &[u8], future: &[u8]) -> Point2 {
    let mut x = 0.5;
    for &a in past.iter().rev() {
        let b = &br[a as usize];
        x = b.x_scale * x + b.x_shift;
    }
    let mut y = 0.5;
    for &a in future.iter().rev() {
        let b = &br[a as usize];
        y = (y - b.y_shift) / b.y_scale;
    }
    Point2::plane(x, y)
}

/// Local splitting `T_x = E^s ⊕ E^u`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplittingFrame {
    pub base: Point2,
    pub e_s: Vec2,
    pub e_u: Vec2,
    pub angle: f64,
}

impl SplittingFrame {
    pub fn new(base: Point2, e_s: Vec2, e_u: Vec2) -> Result<Self> {
        let e_s = canonical_sign(e_s.normalized());
        let e_u = canonical_sign(e_u.normalized());
        let angle = e_s.dot(e_u).abs().min(1.0).acos();
        if !(angle >= SPLITTING_TOL) {
            return Err(Error::Degenerate { angle });
        }
        Ok(Self {
            base,
            e_s,
            e_u,
            angle,
        })
    }

    /// Matrix whose columns are `e_s`, `e_u`.
    pub fn basis(&self) -> Mat2 {
        Mat2::from_columns(self.e_s, self.e_u)
    }

    /// The same directions attached to a different base point.
    pub fn rebased(&self, base: Point2) -> Self {
        Self { base, ..*self }
    }

    /// Frame with `e_s`/`e_u` exchanged, as seen by the inverse map.
    pub fn swapped(&self) -> Self {
        Self {
            e_s: self.e_u,
            e_u: self.e_s,
            ..*self
        }
    }
}

fn canonical_sign(v: Vec2) -> Vec2 {
    if v.x < -1e-14 || (v.x.abs() <= 1e-14 && v.y < 0.0) {
        -v
    } else {
        v
    }
}

const GENERIC_VECTOR: Vec2 = Vec2::new(0.6, 0.8);

/// Estimates `E^s_p`, `E^u_p` by pushing a generic vector through the
/// derivative cocycle along `f^{-n}(p) … fⁿ(p)`.
pub fn estimate_splitting(model: &SystemModel, p: &Point2, n: usize) -> Result<SplittingFrame> {
    if n == 0 {
        return Err(Error::domain("iteration count must be >= 1"));
    }
    let orbit = model.snapped_orbit(p, n, n)?;
    let centre = n;
    let mut v = GENERIC_VECTOR;
    for q in &orbit[..centre] {
        v = model.jacobian(q)?.apply(v).normalized();
    }
    let mut w = GENERIC_VECTOR;
    for q in orbit[centre..centre + n].iter().rev() {
        let inv = model
            .jacobian(q)?
            .inverse()
            .ok_or_else(|| Error::domain("singular derivative"))?;
        w = inv.apply(w).normalized();
    }
    SplittingFrame::new(*p, w, v)
}

/// Exact splitting for models with a constant derivative.
pub fn exact_splitting(model: &SystemModel, p: &Point2) -> Option<SplittingFrame> {
    if !model.has_constant_derivative() {
        return None;
    }
    let m = match &model.kind {
        ModelKind::AffineHorseshoe { branches } => branches[0].linear_part(),
        ModelKind::CatMap { .. } => model.cat_matrix().unwrap(),
        ModelKind::UserGrid(_) => return None,
    };
    let (s, u) = eigen_directions(&m)?;
    SplittingFrame::new(*p, s, u).ok()
}

/// Eigenvectors of a real hyperbolic 2×2 matrix, contracting one first.
pub fn eigen_directions(m: &Mat2) -> Option<(Vec2, Vec2)> {
    let tr = m.trace();
    let det = m.det();
    let disc = tr * tr - 4.0 * det;
    if disc <= 0.0 {
        return None;
    }
    let r = disc.sqrt();
    let (l1, l2) = ((tr + r) / 2.0, (tr - r) / 2.0);
    let vec_for = |l: f64| {
        // Null vector of (M - l I); use the better-conditioned row.
        let r1 = Vec2::new(m.b, l - m.a);
        let r2 = Vec2::new(l - m.d, m.c);
        if r1.norm2() >= r2.norm2() {
            r1.normalized()
        } else {
            r2.normalized()
        }
    };
    let (big, small) = if l1.abs() >= l2.abs() { (l1, l2) } else { (l2, l1) };
    if !(small.abs() < 1.0 && big.abs() > 1.0) {
        return None;
    }
    Some((vec_for(small), vec_for(big)))
}

/// Splitting at `p`: exact for constant-derivative models, estimated otherwise.
pub fn splitting(model: &SystemModel, p: &Point2) -> Result<SplittingFrame> {
    match exact_splitting(model, p) {
        Some(f) => Ok(f),
        None => estimate_splitting(model, p, DEFAULT_SPLITTING_DEPTH),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub pass: bool,
    pub worst_margin: f64,
    pub worst_sample: Option<usize>,
    pub cone_margin: f64,
    pub expansion_margin: f64,
}

/// Cone-field test at each sample, in splitting-frame coordinates with the
/// max-norm. Cones: `K^u_a = {|v_s| ≤ a|v_u|}`, `K^s_a = {|v_u| ≤ a|v_s|}`.
pub fn verify_cone_criterion(
    model: &SystemModel,
    samples: &[Point2],
    cone_width: f64,
    lambda: f64,
) -> ConeReport {
    let a = cone_width;
    let mut cone_margin = f64::INFINITY;
    let mut expansion_margin = f64::INFINITY;
    let mut worst = f64::INFINITY;
    let mut worst_sample = None;
    let rays: Vec<f64> = (0..=8).map(|k| a * (-1.0 + k as f64 / 4.0)).collect();
    for (idx, x) in samples.iter().enumerate() {
        let eval = || -> Result<(f64, f64)> {
            let fx = model.forward(x)?;
            let fr_x = splitting(model, x)?;
            let fr_fx = splitting(model, &fx)?;
            let m = fr_fx
                .basis()
                .inverse()
                .ok_or_else(|| Error::domain("singular frame"))?
                .mul(&model.jacobian(x)?)
                .mul(&fr_x.basis());
            let minv = m.inverse().ok_or_else(|| Error::domain("singular derivative"))?;
            let mut cm = f64::INFINITY;
            let mut em = f64::INFINITY;
            for &t in &rays {
                let vu = Vec2::new(t, 1.0);
                let w = m.apply(vu);
                if t.abs() == a {
                    cm = cm.min(a - w.x.abs() / w.y.abs());
                }
                em = em.min(w.norm_max() / vu.norm_max() - 1.0 / lambda);
                let vs = Vec2::new(1.0, t);
                let w = minv.apply(vs);
                if t.abs() == a {
                    cm = cm.min(a - w.y.abs() / w.x.abs());
                }
                em = em.min(w.norm_max() / vs.norm_max() - 1.0 / lambda);
            }
            Ok((cm, em))
        };
        let (cm, em) = eval().unwrap_or((f64::NEG_INFINITY, f64::NEG_INFINITY));
        cone_margin = cone_margin.min(cm);
        expansion_margin = expansion_margin.min(em);
        if cm.min(em) < worst {
            worst = cm.min(em);
            worst_sample = Some(idx);
        }
    }
    let pass = !samples.is_empty() && cone_margin > 0.0 && expansion_margin >= -1e-12;
    ConeReport {
        pass,
        worst_margin: worst,
        worst_sample,
        cone_margin,
        expansion_margin,
    }
}
