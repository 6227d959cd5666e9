//! `hypdyn`: reports from the hyperbolic dynamics toolkit.

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hypdyn::constants::{build_report, shadowing_tolerance, ReportTargets};
use hypdyn::geometry::Point2;
use hypdyn::io;
use hypdyn::manifold::{bracket, local_stable_manifold, local_unstable_manifold, ManifoldResult};
use hypdyn::maps::{splitting, SystemModel};
use hypdyn::partition::{
    base_partition, refine_rounds, transition_matrix, verify_markov, Partition, RefineMode, DEFAULT_RECTANGLE_CAP,
};
use hypdyn::reproduce::horseshoe_table;
use hypdyn::shadowing::{
    anosov_close, noisy_orbit, shadow_batch, specification_gap, specification_orbit, validate_pseudo_orbit,
    ClosingConfig, ShadowConfig, SpecificationConfig,
};
use hypdyn::symbolic::{
    check_irreducible_aperiodic, count_periodic, decode, itinerary, spectral_radius, trace_count, verify_conjugacy,
    TransitionMatrix, DEFAULT_BRUTE_BUDGET,
};
use serde_json::{json, Map, Value};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

const DEFAULT_SEED: u64 = 1729;
const SPECTRAL_TOL: f64 = 1e-13;

#[derive(Parser, Debug)]
#[command(name = "hypdyn", version, about = "Numerical toolkit for uniformly hyperbolic maps of the plane and torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Builtin name (horseshoe, catmap) or model file.
    #[arg(long, global = true, default_value = "horseshoe")]
    model: String,
    /// Transition matrix file (rows of integers).
    #[arg(long, global = true)]
    matrix: Option<PathBuf>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Orbit length, window half-width or period, depending on the command.
    #[arg(long = "N", global = true)]
    n: Option<usize>,
    /// Refinement rounds.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for the output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Pushforward,
    Pullback,
    Both,
}

impl From<Mode> for RefineMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Pushforward => RefineMode::Pushforward,
            Mode::Pullback => RefineMode::Pullback,
            Mode::Both => RefineMode::Both,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Leaf {
    Stable,
    Unstable,
}

#[derive(Args, Debug, Clone)]
struct PartitionArgs {
    /// Partition CSV; otherwise the base partition refined `--k` times.
    #[arg(long)]
    partition: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Mode::Pushforward)]
    mode: Mode,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Constants ledger for the model's hyperbolicity data.
    Constants,
    /// Stable and unstable directions at a point.
    Splitting {
        #[arg(long, default_value = "0,0")]
        point: String,
    },
    /// Local stable or unstable manifold by the graph transform.
    Manifold {
        #[arg(long, default_value = "0,0")]
        point: String,
        #[arg(long, value_enum, default_value_t = Leaf::Stable)]
        leaf: Leaf,
        #[arg(long, default_value_t = 1e-11)]
        tol: f64,
    },
    /// `[x, y]`, the stable leaf of x met with the unstable leaf of y.
    Bracket {
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
    },
    /// Shadow a pseudo-orbit from a file, or seeded noisy orbits.
    Shadow {
        /// `index,x,y` rows with an optional `# alpha = …` line.
        #[arg(long)]
        orbit: Option<PathBuf>,
        #[arg(long, default_value = "0.1234,0.5678")]
        point: String,
        /// Number of seeded noisy orbits.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long)]
        block: Option<usize>,
    },
    /// Close a near-return of period `--N` into a periodic orbit.
    Close {
        #[arg(long)]
        point: String,
    },
    /// Glue orbit segments `x,y,len;…` into one shadowing orbit.
    Specify {
        #[arg(long)]
        segments: String,
        #[arg(long)]
        gap: Option<usize>,
        #[arg(long)]
        open: bool,
    },
    /// Markov partition by refinement of the base strips.
    Partition {
        #[command(flatten)]
        part: PartitionArgs,
    },
    /// Transition matrix of a partition.
    Matrix {
        #[command(flatten)]
        part: PartitionArgs,
    },
    /// Topological entropy `log ρ(A)`.
    Entropy {
        #[command(flatten)]
        part: PartitionArgs,
    },
    /// Periodic point counts `tr(Aⁿ)` for `n = 1..=N`, with enumeration.
    CountPeriodic {
        #[command(flatten)]
        part: PartitionArgs,
    },
    /// Point coded by a symbol window.
    Decode {
        /// `a_lo,…,a_hi offset`, e.g. `0,1,1,0,1 -2`.
        #[arg(long)]
        word: String,
        #[command(flatten)]
        part: PartitionArgs,
    },
    /// Symbol window of a point.
    Itinerary {
        #[arg(long)]
        point: String,
        #[command(flatten)]
        part: PartitionArgs,
    },
    /// Markov conditions and the conjugacy residual of a partition.
    Verify {
        #[command(flatten)]
        part: PartitionArgs,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        windows: usize,
    },
    /// Horseshoe constants next to their published values.
    ReproduceHorseshoe,
}

struct Report {
    name: &'static str,
    result: Value,
    csv: Option<String>,
    /// Exit 1 after writing, for failed verifications.
    failed: bool,
}

impl Report {
    fn json(name: &'static str, result: Value) -> Self {
        Self { name, result, csv: None, failed: false }
    }
}

fn point(model: &SystemModel, s: &str) -> anyhow::Result<Point2> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("point `{s}`"))?;
    if v.len() != 2 {
        bail!("point `{s}` needs two coordinates");
    }
    Ok(model.point(v[0], v[1]))
}

fn partition(model: &SystemModel, g: &Global, p: &PartitionArgs) -> anyhow::Result<Partition> {
    if let Some(path) = &p.partition {
        return Ok(io::parse_partition(model.name(), &io::read_to_string(path)?)?);
    }
    let base = base_partition(model)?;
    Ok(refine_rounds(model, &base, g.k.unwrap_or(0), p.mode.into(), DEFAULT_RECTANGLE_CAP)?)
}

fn matrix(model: &SystemModel, g: &Global, p: &PartitionArgs) -> anyhow::Result<(TransitionMatrix, &'static str)> {
    match &g.matrix {
        Some(path) => Ok((io::parse_matrix(&io::read_to_string(path)?)?, "file")),
        None => Ok((transition_matrix(model, &partition(model, g, p)?), "partition")),
    }
}

fn points_csv(pts: &[Point2]) -> String {
    io::format_points("index,x,y", pts)
}

fn manifold_csv(r: &ManifoldResult) -> String {
    let mut s = String::from("s,h,x,y\n");
    for (a, h, p) in r.graph.table() {
        let _ = writeln!(s, "{a:.17e},{h:.17e},{:.17e},{:.17e}", p.x, p.y);
    }
    s
}

/// Rounds to 12 significant digits for display next to the full value.
fn display(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

fn run(cmd: &Command, g: &Global, model: &SystemModel) -> anyhow::Result<Report> {
    let data = &model.data;
    Ok(match cmd {
        Command::Constants => {
            let mut t = ReportTargets::default();
            if let Some(d) = g.delta {
                t.delta_coding = d;
            }
            if let Some(b) = g.beta {
                t.beta = b;
            }
            if let Some(e) = g.eps {
                t.eps_expansive = e;
            }
            let rep = build_report(data, &t)?;
            let summary = json!({
                "K": display(rep.k_adapted),
                "k": rep.k_grid,
                "count": rep.rectangle_count,
                "alpha_over_beta": display(rep.alpha_over_beta),
            });
            let mut csv = String::from("key,value\n");
            if let Value::Object(m) = serde_json::to_value(&rep)? {
                for (k, v) in m {
                    let _ = writeln!(csv, "{k},{v}");
                }
            }
            Report {
                csv: Some(csv),
                ..Report::json("constants", json!({ "summary": summary, "ledger": rep }))
            }
        }
        Command::Splitting { point: p } => {
            let x = point(model, p)?;
            let f = splitting(model, &x)?;
            Report::json("splitting", serde_json::to_value(f)?)
        }
        Command::Manifold { point: p, leaf, tol } => {
            let x = point(model, p)?;
            let delta = g.delta.unwrap_or(0.25 * data.delta0);
            let r = match leaf {
                Leaf::Stable => local_stable_manifold(model, &x, delta, *tol)?,
                Leaf::Unstable => local_unstable_manifold(model, &x, delta, *tol)?,
            };
            let res = json!({
                "delta": delta,
                "iterations": r.iterations,
                "converged": r.converged,
                "theta": r.theta,
                "theta_check": r.theta_check,
                "max_step_ratio": r.max_ratio(),
                "predicted_iterations": r.predicted_iterations,
                "step_changes": r.step_changes,
                "nodes": r.graph.nodes(),
                "lipschitz": r.graph.empirical_lipschitz(),
            });
            Report {
                csv: Some(manifold_csv(&r)),
                ..Report::json("manifold", res)
            }
        }
        Command::Bracket { x, y } => {
            let (x, y) = (point(model, x)?, point(model, y)?);
            let eps = g.eps.unwrap_or(data.bracket_constant() * data.delta0);
            Report::json("bracket", serde_json::to_value(bracket(model, &x, &y, eps)?)?)
        }
        Command::Shadow { orbit, point: p, count, block } => {
            let cfg = ShadowConfig { block: *block, ..Default::default() };
            let orbits = match orbit {
                Some(path) => vec![io::parse_pseudo_orbit(model, &io::read_to_string(path)?, g.alpha)?],
                None => {
                    let x = point(model, p)?;
                    let amp = g.alpha.unwrap_or(1e-4);
                    let len = g.n.unwrap_or(50);
                    (0..*count as u64)
                        .map(|i| noisy_orbit(model, &x, len, amp, g.seed.wrapping_add(i)))
                        .collect::<Result<Vec<_>, _>>()?
                }
            };
            for o in &orbits {
                let audit = validate_pseudo_orbit(model, o)?;
                if !audit.valid {
                    bail!(hypdyn::Error::InvalidPseudoOrbit {
                        index: audit.location,
                        gap: audit.worst_gap,
                        alpha: o.alpha
                    });
                }
            }
            let results = shadow_batch(model, &orbits, &cfg, g.jobs)
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            let summary: Vec<Value> = results
                .iter()
                .zip(&orbits)
                .map(|(r, o)| {
                    json!({
                        "alpha": o.alpha,
                        "achieved_beta": r.achieved_beta,
                        "predicted_beta": r.predicted_beta,
                        "empirical_ratio": r.empirical_ratio,
                        "block": r.block,
                        "start": r.start,
                        "warning": r.warning,
                    })
                })
                .collect();
            Report {
                csv: Some(points_csv(&results[0].orbit)),
                ..Report::json("shadow", json!({ "orbits": summary }))
            }
        }
        Command::Close { point: p } => {
            let x = point(model, p)?;
            let n = g.n.ok_or_else(|| anyhow!("close needs --N"))?;
            let r = anosov_close(model, &x, n, &ClosingConfig { beta: g.beta, ..Default::default() })?;
            Report {
                csv: Some(points_csv(&r.orbit)),
                ..Report::json("close", serde_json::to_value(&r)?)
            }
        }
        Command::Specify { segments, gap, open } => {
            let segs = segments
                .split(';')
                .map(|s| {
                    let (xy, len) = s.rsplit_once(',').ok_or_else(|| anyhow!("segment `{s}` is not x,y,len"))?;
                    Ok((point(model, xy)?, len.trim().parse::<usize>().context("segment length")?))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let cfg = SpecificationConfig { periodic: !open, eps: g.eps, ..Default::default() };
            let eps = g.eps.unwrap_or(0.5 * data.delta0);
            let gap = match gap {
                Some(gp) => *gp,
                None => specification_gap(model, shadowing_tolerance(cfg.constant, data.lambda, eps / 2.0)?),
            };
            let r = specification_orbit(model, &segs, gap, &cfg)?;
            Report {
                csv: Some(points_csv(&r.shadow.orbit)),
                ..Report::json(
                    "specify",
                    json!({
                        "point": r.point,
                        "period": r.period,
                        "gap": gap,
                        "eps": eps,
                        "offsets": r.offsets,
                        "tracking": r.tracking,
                        "achieved_beta": r.shadow.achieved_beta,
                    }),
                )
            }
        }
        Command::Partition { part } => {
            let p = partition(model, g, part)?;
            let res = json!({
                "rectangles": p.len(),
                "rounds": p.rounds,
                "mode": p.mode,
                "diameter": p.diameter(),
                "s_diameter": p.s_diameter(),
                "u_diameter": p.u_diameter(),
            });
            Report {
                csv: Some(io::format_partition(&p)),
                ..Report::json("partition", res)
            }
        }
        Command::Matrix { part } => {
            let (a, source) = matrix(model, g, part)?;
            let irr = check_irreducible_aperiodic(&a);
            Report {
                csv: Some(io::format_matrix(&a)),
                ..Report::json("matrix", json!({ "source": source, "size": a.size(), "rows": a.rows(), "irreducibility": irr }))
            }
        }
        Command::Entropy { part } => {
            let (a, source) = matrix(model, g, part)?;
            let r = spectral_radius(&a, SPECTRAL_TOL)?;
            Report::json("entropy", json!({ "source": source, "size": a.size(), "spectral": r, "entropy": r.entropy }))
        }
        Command::CountPeriodic { part } => {
            let (a, source) = matrix(model, g, part)?;
            let n_max = g.n.unwrap_or(12) as u32;
            let mut rows = Vec::new();
            let mut csv = String::from("n,trace,brute\n");
            for n in 1..=n_max {
                let (trace, brute) = match count_periodic(&a, n, DEFAULT_BRUTE_BUDGET) {
                    Ok(c) => (c.trace, Some(c.brute)),
                    Err(hypdyn::Error::CapExceeded { trace }) => (trace, None),
                    Err(e) => return Err(e.into()),
                };
                let _ = writeln!(csv, "{n},{trace},{}", brute.map(|b| b.to_string()).unwrap_or_default());
                rows.push(json!({ "n": n, "trace": trace.to_string(), "brute": brute.map(|b| b.to_string()) }));
            }
            let agree = rows.iter().all(|r| r["brute"].is_null() || r["brute"] == r["trace"]);
            Report {
                csv: Some(csv),
                failed: !agree,
                ..Report::json("count-periodic", json!({ "source": source, "counts": rows, "agree": agree }))
            }
        }
        Command::Decode { word, part } => {
            let w = io::parse_word(word)?;
            let p = partition(model, g, part)?;
            let n = match g.n {
                Some(n) => n,
                None => (-w.offset).min(w.end()).max(0) as usize,
            };
            Report::json("decode", serde_json::to_value(decode(model, &p, &w, n)?)?)
        }
        Command::Itinerary { point: pt, part } => {
            let x = point(model, pt)?;
            let p = partition(model, g, part)?;
            let it = itinerary(model, &p, &x, g.n.unwrap_or(10))?;
            Report::json(
                "itinerary",
                json!({ "word": io::format_word(&it.window), "window": it.window, "flagged": it.flagged }),
            )
        }
        Command::Verify { part, samples, windows } => {
            let p = partition(model, g, part)?;
            let markov = verify_markov(model, &p, *samples);
            let n = g.n.unwrap_or(10);
            let conj = verify_conjugacy(model, &p, *windows, n, g.seed)?;
            let a = transition_matrix(model, &p);
            let periodic = (1..=6)
                .map(|n| trace_count(&a, n).map(|t| t.to_string()))
                .collect::<Result<Vec<_>, _>>()?;
            let conj_summary = json!({
                "samples": conj.samples,
                "N": conj.n,
                "bound": conj.bound,
                "max_residual": conj.max_residual,
                "passed": conj.passed,
                "all_pass": conj.all_pass,
            });
            Report {
                failed: !(markov.pass && conj.all_pass),
                ..Report::json(
                    "verify",
                    json!({ "rectangles": p.len(), "markov": markov, "conjugacy": conj_summary, "periodic_counts": periodic }),
                )
            }
        }
        Command::ReproduceHorseshoe => {
            let t = horseshoe_table()?;
            let mut csv = String::from("quantity,computed,published,tolerance,matches\n");
            for r in &t.rows {
                let _ = writeln!(csv, "\"{}\",\"{}\",\"{}\",\"{}\",{}", r.quantity, r.computed, r.published, r.tolerance, r.matches);
            }
            Report {
                csv: Some(csv),
                failed: !t.all_match,
                ..Report::json("reproduce-horseshoe", serde_json::to_value(&t)?)
            }
        }
    })
}

fn header(g: &Global, argv: &[String]) -> Value {
    json!({
        "tool": "hypdyn",
        "version": env!("CARGO_PKG_VERSION"),
        "argv": argv,
        "seed": g.seed,
        "parameters": {
            "model": g.model,
            "matrix": g.matrix,
            "delta": g.delta,
            "beta": g.beta,
            "alpha": g.alpha,
            "N": g.n,
            "k": g.k,
            "eps": g.eps,
            "jobs": g.jobs,
        },
    })
}

fn csv_fallback(v: &Value) -> String {
    let mut s = String::from("key,value\n");
    if let Value::Object(m) = v {
        for (k, v) in m {
            let _ = writeln!(s, "{k},{v}");
        }
    }
    s
}

fn render(g: &Global, argv: &[String], rep: &Report) -> anyhow::Result<String> {
    let head = header(g, argv);
    Ok(match g.format {
        Format::Json => {
            let mut doc = Map::new();
            doc.insert("header".into(), head);
            doc.insert("command".into(), Value::from(rep.name));
            doc.insert("result".into(), rep.result.clone());
            serde_json::to_string_pretty(&Value::Object(doc))? + "\n"
        }
        Format::Csv => {
            let mut s = String::new();
            let _ = writeln!(s, "# tool = hypdyn {}", env!("CARGO_PKG_VERSION"));
            let _ = writeln!(s, "# argv = {}", argv.join(" "));
            let _ = writeln!(s, "# seed = {}", g.seed);
            let _ = writeln!(s, "# command = {}", rep.name);
            s + &rep.csv.clone().unwrap_or_else(|| csv_fallback(&rep.result))
        }
    })
}

fn main() -> ExitCode {
    let mut argv: Vec<String> = std::env::args().collect();
    if let Some(first) = argv.first_mut() {
        *first = "hypdyn".into();
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let g = &cli.global;
    let outcome = io::load_model(&g.model)
        .map_err(anyhow::Error::from)
        .and_then(|m| run(&cli.command, g, &m))
        .and_then(|rep| Ok((render(g, &argv, &rep)?, rep)));
    match outcome {
        Ok((text, rep)) => {
            match &g.out {
                Some(dir) => {
                    let ext = if g.format == Format::Json { "json" } else { "csv" };
                    let path = dir.join(format!("{}.{ext}", rep.name));
                    if let Err(e) = std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, &text)) {
                        eprintln!("error: {}: {e}", path.display());
                        return ExitCode::from(1);
                    }
                    println!("{}", path.display());
                }
                None => print!("{text}"),
            }
            if rep.failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
