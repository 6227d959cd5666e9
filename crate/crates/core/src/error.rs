use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate splitting: angle {angle:.3e} rad")]
    Degenerate { angle: f64 },
    #[error("smallness condition violated: lambda*C1*delta*(K+1) = {lhs} >= 1 - lambda = {rhs}")]
    Smallness { lhs: f64, rhs: f64 },
    #[error("inner iteration diverged at node {node} (s = {s})")]
    InnerDivergence { node: usize, s: f64 },
    #[error("graph transform is not contracting: observed ratio {observed} exceeds {bound}")]
    NonContraction { observed: f64, bound: f64 },
    #[error("graph transform did not converge within {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("bracket iteration left the chart")]
    NoIntersection,
    #[error("points too far apart for a bracket: d = {distance} >= {limit}")]
    TooFar { distance: f64, limit: f64 },
    #[error("invalid pseudo-orbit: gap {gap} at index {index} exceeds alpha {alpha}")]
    InvalidPseudoOrbit { index: usize, gap: f64, alpha: f64 },
    #[error("shadowing error {achieved} exceeds prediction {predicted}")]
    ToleranceExceeded { achieved: f64, predicted: f64 },
    #[error("no near return: d(f^n x, x) = {distance} >= {alpha}")]
    NotNearReturn { distance: f64, alpha: f64 },
    #[error("gap {gap} is below the required gap {required}")]
    GapTooSmall { gap: usize, required: usize },
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("sampled set is not {gamma}-dense: uncovered sample at distance {distance}")]
    InsufficientDensity { gamma: f64, distance: f64 },
    #[error("ambiguous overlap between rectangles {first} and {second}")]
    DegenerateOverlap { first: usize, second: usize },
    #[error("rectangle budget exceeded: {count} > {cap}")]
    BudgetExceeded { count: usize, cap: usize },
    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    AlphabetMismatch { symbol: usize, alphabet: usize },
    #[error("brute-force enumeration over budget (trace count {trace})")]
    CapExceeded { trace: u128 },
    #[error("empty intersection at window index {index}")]
    EmptyIntersection { index: i64 },
    #[error("point at orbit index {index} lies outside the partition")]
    OutsidePartition { index: i64 },
    #[error("window does not cover [-{needed}, {needed}]")]
    WindowTooShort { needed: usize },
    #[error("integer overflow in exact arithmetic")]
    Overflow,
    #[error("{formula}: {source}")]
    Formula {
        formula: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error at line {line} (key `{key}`): {message}")]
    Parse {
        line: usize,
        key: String,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn tagged(self, formula: &'static str) -> Self {
        Error::Formula {
            formula,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
