//! 256-bin per-axis discretization of motion labels into token ids.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::labels::Trajectory;
use crate::Vec2D;

/// Intervals per axis.
pub const NUM_BINS: usize = 256;
/// Start-of-trajectory token.
pub const SOT: u32 = NUM_BINS as u32;
/// End-of-trajectory token.
pub const EOT: u32 = NUM_BINS as u32 + 1;

#[derive(Debug, thiserror::Error)]
pub enum TokenError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("axis {0} has zero variance; use uniform mode")]
    DegenerateAxis(char),
    #[error("corpus mixes time steps ({0} and {1})")]
    MixedDt(f64, f64),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("token {position}: {reason}")]
    Parse { position: usize, reason: String },
    #[error("invalid bins: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    Quantile,
    Uniform,
}

impl std::str::FromStr for BinMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "quantile" => Ok(BinMode::Quantile),
            "uniform" => Ok(BinMode::Uniform),
            other => Err(format!("unknown bin mode {other:?}")),
        }
    }
}

/// Outer bounds plus the 255 interior edges of one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBins {
    pub lo: f64,
    pub hi: f64,
    pub edges: Vec<f64>,
}

impl AxisBins {
    fn uniform(lo: f64, hi: f64) -> Self {
        let w = (hi - lo) / NUM_BINS as f64;
        Self {
            lo,
            hi,
            edges: (1..NUM_BINS).map(|k| lo + k as f64 * w).collect(),
        }
    }

    fn validate(&self, axis: char) -> Result<(), TokenError> {
        if self.edges.len() != NUM_BINS - 1 {
            return Err(TokenError::Invalid(format!("axis {axis}: {} interior edges", self.edges.len())));
        }
        let all: Vec<f64> = std::iter::once(self.lo).chain(self.edges.iter().copied()).chain([self.hi]).collect();
        if all.iter().any(|v| !v.is_finite()) || all.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TokenError::Invalid(format!("axis {axis}: edges must be finite and strictly ascending")));
        }
        Ok(())
    }

    /// Half-open bins: a value on an edge belongs to the higher interval.
    /// Values outside `[lo, hi)` clamp to the extreme bins.
    pub fn bin(&self, v: f64) -> usize {
        self.edges.partition_point(|&e| e <= v)
    }

    pub fn bounds(&self, bin: usize) -> (f64, f64) {
        let lower = if bin == 0 { self.lo } else { self.edges[bin - 1] };
        let upper = if bin + 1 == NUM_BINS { self.hi } else { self.edges[bin] };
        (lower, upper)
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        let (a, b) = self.bounds(bin);
        0.5 * (a + b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenBins {
    pub mode: BinMode,
    pub x: AxisBins,
    pub y: AxisBins,
    /// Point spacing of the labels the bins were fitted on.
    pub dt: f64,
    pub sot: u32,
    pub eot: u32,
}

impl TokenBins {
    pub fn validate(&self) -> Result<(), TokenError> {
        self.x.validate('x')?;
        self.y.validate('y')?;
        if self.sot != SOT || self.eot != EOT {
            return Err(TokenError::Invalid(format!("special tokens must be {SOT}/{EOT}")));
        }
        if !(self.dt > 0.0) {
            return Err(TokenError::Invalid("dt must be positive".into()));
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> u32 {
        EOT + 1
    }

    pub fn load(path: &Path) -> Result<Self, TokenError> {
        let name = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| TokenError::Io { path: name.clone(), source })?;
        let bins: Self = serde_json::from_str(&text).map_err(|source| TokenError::Json { path: name, source })?;
        bins.validate()?;
        Ok(bins)
    }
}

/// Type-7 empirical quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn fit_axis(mut values: Vec<f64>, mode: BinMode, axis: char) -> Result<AxisBins, TokenError> {
    values.sort_by(f64::total_cmp);
    let (min, max) = (values[0], values[values.len() - 1]);
    let range = max - min;
    match mode {
        BinMode::Uniform => {
            if range <= f64::EPSILON * min.abs().max(1.0) {
                Ok(AxisBins::uniform(min - 0.5, max + 0.5))
            } else {
                Ok(AxisBins::uniform(min, max))
            }
        }
        BinMode::Quantile => {
            if range <= 0.0 {
                return Err(TokenError::DegenerateAxis(axis));
            }
            // Repeated values give repeated quantiles; push each edge just past
            // its predecessor so intervals stay non-empty.
            let eps = range * 1e-9;
            let mut edges = Vec::with_capacity(NUM_BINS - 1);
            let mut prev = min;
            for k in 1..NUM_BINS {
                let e = quantile(&values, k as f64 / NUM_BINS as f64).max(prev + eps);
                edges.push(e);
                prev = e;
            }
            Ok(AxisBins {
                lo: min,
                hi: max.max(prev + eps),
                edges,
            })
        }
    }
}

pub fn fit_token_bins(corpus: &[Trajectory<f64>], mode: BinMode) -> Result<TokenBins, TokenError> {
    let first = corpus.first().ok_or(TokenError::EmptyCorpus)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in corpus {
        if (t.dt - first.dt).abs() > 1e-12 {
            return Err(TokenError::MixedDt(first.dt, t.dt));
        }
        for (i, p) in t.offsets.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(TokenError::NonFinite(i));
            }
            xs.push(p.x);
            ys.push(p.y);
        }
    }
    if xs.is_empty() {
        return Err(TokenError::EmptyCorpus);
    }
    Ok(TokenBins {
        mode,
        x: fit_axis(xs, mode, 'x')?,
        y: fit_axis(ys, mode, 'y')?,
        dt: first.dt,
        sot: SOT,
        eot: EOT,
    })
}

/// `SOT, x₁, y₁, …, x_N, y_N, EOT`.
pub fn tokenize(label: &Trajectory<f64>, bins: &TokenBins) -> Result<Vec<u32>, TokenError> {
    let mut out = Vec::with_capacity(2 * label.len() + 2);
    out.push(SOT);
    for (i, p) in label.offsets.iter().enumerate() {
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(TokenError::NonFinite(i));
        }
        out.push(bins.x.bin(p.x) as u32);
        out.push(bins.y.bin(p.y) as u32);
    }
    out.push(EOT);
    Ok(out)
}

pub fn detokenize(tokens: &[u32], bins: &TokenBins) -> Result<Trajectory<f64>, TokenError> {
    let err = |position: usize, reason: &str| TokenError::Parse {
        position,
        reason: reason.to_string(),
    };
    match tokens.first() {
        Some(&SOT) => {}
        Some(_) => return Err(err(0, "expected SOT")),
        None => return Err(err(0, "empty sequence")),
    }
    let end = tokens.len() - 1;
    if tokens.len() < 2 || tokens[end] != EOT {
        return Err(err(tokens.len(), "missing EOT"));
    }
    let payload = &tokens[1..end];
    if let Some(i) = payload.iter().position(|&t| t as usize >= NUM_BINS) {
        let what = if payload[i] == SOT || payload[i] == EOT {
            "special token inside payload"
        } else {
            "id outside vocabulary"
        };
        return Err(err(i + 1, what));
    }
    if payload.is_empty() {
        return Err(err(1, "no waypoints"));
    }
    if payload.len() % 2 == 1 {
        return Err(err(end, "odd payload length"));
    }
    let offsets = payload
        .chunks(2)
        .map(|c| Vec2D::new(bins.x.midpoint(c[0] as usize), bins.y.midpoint(c[1] as usize)))
        .collect();
    Ok(Trajectory::new(offsets, bins.dt))
}
