//! Text formats: model files, transition matrices, symbol windows,
//! partitions and pseudo-orbits.
//!
//! Model files are `key = value` lines; `#` starts a comment.
//!
//! ```text
//! kind = catmap          # horseshoe | catmap | toral | grid
//! matrix = 2,1,1,1       # toral and catmap
//! lambda = 0.9           # any HyperbolicityData field
//! xs = 0,0.5,1           # grid: axes and row-major images
//! ```

use crate::error::{Error, Result};
use crate::geometry::{Interval, Point2};
use crate::maps::{HyperbolicityData, SystemModel, UserGrid};
use crate::partition::{Partition, Rectangle};
use crate::shadowing::PseudoOrbit;
use crate::symbolic::{SymbolWindow, TransitionMatrix};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

fn parse_err(line: usize, key: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn strip_comment(l: &str) -> &str {
    l.split('#').next().unwrap_or("").trim()
}

fn num(line: usize, key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(line, key, format!("`{v}` is not a number")))
}

fn list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split([',', ' ', '\t'])
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| parse_err(line, key, format!("bad entry `{t}`"))))
        .collect()
}

/// Builtin names accepted by [`load_model`].
pub const BUILTIN_MODELS: [&str; 2] = ["horseshoe", "catmap"];

pub fn builtin_model(name: &str) -> Option<SystemModel> {
    match name {
        "horseshoe" | "affine_horseshoe" => Some(SystemModel::horseshoe()),
        "catmap" | "cat_map" | "cat" => Some(SystemModel::cat_map()),
        _ => None,
    }
}

/// Builtin name or path to a model file.
pub fn load_model(spec: &str) -> Result<SystemModel> {
    if let Some(m) = builtin_model(spec) {
        return Ok(m);
    }
    let text = std::fs::read_to_string(spec).map_err(|e| Error::Io(format!("{spec}: {e}")))?;
    parse_model(&text)
}

fn set_field(d: &mut HyperbolicityData, key: &str, v: f64) -> bool {
    let slot = match key {
        "lambda" => &mut d.lambda,
        "c" => &mut d.c,
        "mu_adapt" => &mut d.mu_adapt,
        "C0" | "c0" => &mut d.c0,
        "C1" | "c1" => &mut d.c1,
        "K_lip" | "k_lip" => &mut d.k_lip,
        "L" | "l" => &mut d.l,
        "L_inv" | "l_inv" => &mut d.l_inv,
        "beta_holder" => &mut d.beta_holder,
        "delta0" => &mut d.delta0,
        "c0_floor" => &mut d.c0_floor,
        _ => return false,
    };
    *slot = v;
    true
}

/// Parses a model file; data overrides are merged over the kind's defaults.
pub fn parse_model(text: &str) -> Result<SystemModel> {
    let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = strip_comment(raw);
        if l.is_empty() {
            continue;
        }
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| parse_err(line, l, "expected `key = value`"))?;
        let k = k.trim().to_string();
        if entries.contains_key(&k) {
            return Err(parse_err(line, &k, "duplicate key"));
        }
        entries.insert(k, (line, v.trim().to_string()));
    }
    let (kline, kind) = entries
        .remove("kind")
        .ok_or_else(|| parse_err(0, "kind", "missing"))?;
    let mut take = |k: &str| entries.remove(k);
    let model = match kind.as_str() {
        "horseshoe" | "affine_horseshoe" => SystemModel::horseshoe(),
        "catmap" | "cat_map" | "toral" => match take("matrix") {
            Some((line, v)) => {
                let e: Vec<i64> = list(line, "matrix", &v)?;
                if e.len() != 4 {
                    return Err(parse_err(line, "matrix", "expected four entries"));
                }
                SystemModel::toral([[e[0], e[1]], [e[2], e[3]]])
                    .map_err(|err| parse_err(line, "matrix", err.to_string()))?
            }
            None if kind == "toral" => return Err(parse_err(kline, "matrix", "missing for toral kind")),
            None => SystemModel::cat_map(),
        },
        "grid" | "user_grid" => {
            let mut get = |k: &str| -> Result<Vec<f64>> {
                let (line, v) = take(k).ok_or_else(|| parse_err(kline, k, "missing for grid kind"))?;
                list(line, k, &v)
            };
            let grid = UserGrid {
                xs: get("xs")?,
                ys: get("ys")?,
                fx: get("fx")?,
                fy: get("fy")?,
            };
            SystemModel::user_grid(grid, HyperbolicityData::toral(3.0))?
        }
        other => return Err(parse_err(kline, "kind", format!("unknown kind `{other}`"))),
    };
    let mut data = model.data;
    for (k, (line, v)) in &entries {
        if !set_field(&mut data, k, num(*line, k, v)?) {
            return Err(parse_err(*line, k, "unknown key"));
        }
    }
    data.validate()?;
    let model = model.with_data(data);
    model.validate()?;
    Ok(model)
}

/// Rows of integers separated by commas or whitespace.
pub fn parse_matrix(text: &str) -> Result<TransitionMatrix> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = strip_comment(raw);
        if !l.is_empty() {
            rows.push(list::<u64>(i + 1, "row", l)?);
        }
    }
    TransitionMatrix::new(rows)
}

pub fn format_matrix(a: &TransitionMatrix) -> String {
    let mut s = String::new();
    for row in a.rows() {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "{}", cells.join(" "));
    }
    s
}

/// `symbols offset [periodic]`, symbols comma-separated.
pub fn parse_word(text: &str) -> Result<SymbolWindow> {
    let (line, l) = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, strip_comment(l)))
        .find(|(_, l)| !l.is_empty())
        .ok_or_else(|| parse_err(0, "word", "empty input"))?;
    let mut tok = l.split_whitespace();
    let symbols: Vec<usize> = list(line, "symbols", tok.next().unwrap_or(""))?;
    let offset = match tok.next() {
        Some(t) => t.parse::<i64>().map_err(|_| parse_err(line, "offset", format!("bad offset `{t}`")))?,
        None => 0,
    };
    if symbols.is_empty() {
        return Err(parse_err(line, "symbols", "no symbols"));
    }
    match tok.next() {
        None => Ok(SymbolWindow::new(symbols, offset)),
        Some("periodic") => Ok(SymbolWindow {
            offset,
            ..SymbolWindow::periodic(symbols)
        }),
        Some(t) => Err(parse_err(line, "periodic", format!("unexpected token `{t}`"))),
    }
}

pub fn format_word(w: &SymbolWindow) -> String {
    let s: Vec<String> = w.symbols.iter().map(usize::to_string).collect();
    format!("{} {}{}", s.join(","), w.offset, if w.periodic { " periodic" } else { "" })
}

fn word_field(r: &Rectangle) -> String {
    let s: Vec<String> = r.word.iter().map(usize::to_string).collect();
    format!("{}@{}", s.join(":"), r.word_offset)
}

pub const PARTITION_HEADER: &str = "id,word,s_lo,s_hi,u_lo,u_hi";

pub fn format_partition(p: &Partition) -> String {
    let mut s = format!("{PARTITION_HEADER}\n");
    for r in &p.rectangles {
        let _ = writeln!(
            s,
            "{},{},{:e},{:e},{:e},{:e}",
            r.id,
            word_field(r),
            r.s.lo,
            r.s.hi,
            r.u.lo,
            r.u.hi
        );
    }
    s
}

pub fn parse_partition(model_name: &str, text: &str) -> Result<Partition> {
    let mut rects = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = strip_comment(raw);
        if l.is_empty() || l.starts_with("id,") {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 6 {
            return Err(parse_err(line, "row", format!("expected 6 fields, got {}", f.len())));
        }
        let (word, offset) = f[1]
            .split_once('@')
            .ok_or_else(|| parse_err(line, "word", "expected `symbols@offset`"))?;
        let word: Vec<usize> = word
            .split(':')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().map_err(|_| parse_err(line, "word", format!("bad symbol `{t}`"))))
            .collect::<Result<_>>()?;
        let offset = offset
            .parse::<i64>()
            .map_err(|_| parse_err(line, "word", format!("bad offset `{offset}`")))?;
        let v: Vec<f64> = [2, 3, 4, 5]
            .iter()
            .zip(["s_lo", "s_hi", "u_lo", "u_hi"])
            .map(|(&k, key)| num(line, key, f[k]))
            .collect::<Result<_>>()?;
        if !(v[0] <= v[1] && v[2] <= v[3]) {
            return Err(parse_err(line, "row", "interval endpoints out of order"));
        }
        let mut r = Rectangle::new(rects.len(), Interval::new(v[0], v[1]), Interval::new(v[2], v[3]));
        r.word = word;
        r.word_offset = offset;
        rects.push(r);
    }
    Ok(Partition::new(model_name, rects))
}

/// `index,x,y` rows; an optional `# alpha = …` line sets the tolerance and
/// `# periodic` selects the periodic extension.
pub fn parse_pseudo_orbit(model: &SystemModel, text: &str, alpha: Option<f64>) -> Result<PseudoOrbit> {
    let mut pts = Vec::new();
    let mut file_alpha = None;
    let mut periodic = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let t = raw.trim();
        if let Some(c) = t.strip_prefix('#') {
            let c = c.trim();
            if let Some(v) = c.strip_prefix("alpha").and_then(|r| r.trim().strip_prefix('=')) {
                file_alpha = Some(num(line, "alpha", v)?);
            } else if c == "periodic" {
                periodic = true;
            }
            continue;
        }
        if t.is_empty() || t.starts_with("index") {
            continue;
        }
        let f: Vec<&str> = t.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(parse_err(line, "row", "expected `index,x,y`"));
        }
        let idx: usize = f[0].parse().map_err(|_| parse_err(line, "index", "not an integer"))?;
        if idx != pts.len() {
            return Err(parse_err(line, "index", format!("expected {}, got {idx}", pts.len())));
        }
        pts.push(model.point(num(line, "x", f[1])?, num(line, "y", f[2])?));
    }
    let alpha = alpha
        .or(file_alpha)
        .ok_or_else(|| parse_err(0, "alpha", "not given in the file or on the command line"))?;
    Ok(if periodic {
        PseudoOrbit::periodic(pts, alpha)
    } else {
        PseudoOrbit::finite(pts, alpha)
    })
}

pub fn format_points(header: &str, pts: &[Point2]) -> String {
    let mut s = format!("{header}\n");
    for (i, p) in pts.iter().enumerate() {
        let _ = writeln!(s, "{i},{:.17e},{:.17e}", p.x, p.y);
    }
    s
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
