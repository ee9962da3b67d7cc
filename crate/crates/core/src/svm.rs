//! Soft-margin linear SVM solved in the dual by pairwise coordinate
//! optimization.
//!
//! Pairs are swept in index order, each update solving the two-variable
//! subproblem analytically under the box and equality constraints, until the
//! maximum KKT violation drops below the tolerance. The sweep order is fixed
//! so training is fully reproducible. The bias comes from the complementary
//! slackness of free support vectors, falling back to the midpoint of the
//! optimality interval when none are free.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    /// Box constraint on the dual variables.
    pub c: f64,
    /// Convergence bound on the KKT violation.
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { c: 10.0, tolerance: 1e-3, max_sweeps: 10_000 }
    }
}

/// Linear decision function `sign(w . x + b)` with training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// Training samples with label +1.
    pub positive_count: usize,
    /// Training samples with label -1.
    pub negative_count: usize,
}

/// Solver diagnostics returned alongside the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Dual objective at convergence.
    pub objective: f64,
    pub sweeps: usize,
    pub support_vectors: usize,
    /// Final KKT violation (optimality gap).
    pub kkt_violation: f64,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SvmError {
    #[error("training set is empty")]
    Empty,
    #[error("training needs at least one sample of each class")]
    SingleClass,
    #[error("sample {sample} contains a non-finite feature")]
    NonFinite { sample: usize },
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("solver did not converge after {sweeps} sweeps (violation {violation})")]
    NoConvergence { sweeps: usize, violation: f64 },
    #[error("invalid options: {0}")]
    BadOptions(String),
    #[error("malformed model file: {0}")]
    ModelFormat(String),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Solver<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    c: f64,
    alpha: Vec<f64>,
    w: Vec<f64>,
    diag: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(x: &'a [Vec<f64>], y: &'a [f64], c: f64, dim: usize) -> Self {
        Solver {
            x,
            y,
            c,
            alpha: vec![0.0; x.len()],
            w: vec![0.0; dim],
            diag: x.iter().map(|xi| dot(xi, xi)).collect(),
        }
    }

    /// Analytic maximization over the pair `(i, j)` along the feasible line.
    fn pair_update(&mut self, i: usize, j: usize) {
        let (yi, yj) = (self.y[i], self.y[j]);
        let s = yi * yj;
        let (ai, aj) = (self.alpha[i], self.alpha[j]);
        let (lo, hi) = if s < 0.0 {
            ((aj - ai).max(0.0), (self.c + aj - ai).min(self.c))
        } else {
            ((ai + aj - self.c).max(0.0), (ai + aj).min(self.c))
        };
        if hi - lo < 1e-15 {
            return;
        }
        let eta = self.diag[i] + self.diag[j] - 2.0 * dot(&self.x[i], &self.x[j]);
        let wxi = dot(&self.w, &self.x[i]);
        let wxj = dot(&self.w, &self.x[j]);
        let aj_new = if eta > 1e-12 {
            // Classic two-variable optimum, clipped to the box.
            let e_i = wxi - yi;
            let e_j = wxj - yj;
            (aj + yj * (e_i - e_j) / eta).clamp(lo, hi)
        } else {
            // Flat direction: the objective is linear along the line, so the
            // optimum sits at an endpoint.
            let slope = |t: f64| {
                let m = t - aj;
                m * (1.0 - s) - yj * m * (wxj - wxi) - 0.5 * m * m * eta.max(0.0)
            };
            if slope(hi) >= slope(lo) {
                hi
            } else {
                lo
            }
        };
        let delta_j = aj_new - aj;
        if delta_j.abs() < 1e-14 {
            return;
        }
        self.alpha[j] = aj_new;
        self.alpha[i] = ai - s * delta_j;
        // w += yj * delta_j * (x_j - x_i)
        let scale = yj * delta_j;
        for ((w, xj), xi) in self.w.iter_mut().zip(&self.x[j]).zip(&self.x[i]) {
            *w += scale * (xj - xi);
        }
    }

    /// Optimality interval `[m, M]` for the bias and the violation `m - M`.
    fn kkt_gap(&self) -> (f64, f64, f64) {
        let bound_eps = 1e-10 * self.c.max(1.0);
        let mut m = f64::NEG_INFINITY;
        let mut big_m = f64::INFINITY;
        for i in 0..self.x.len() {
            let v = -self.y[i] * (self.y[i] * dot(&self.w, &self.x[i]) - 1.0);
            let a = self.alpha[i];
            let up = (self.y[i] > 0.0 && a < self.c - bound_eps)
                || (self.y[i] < 0.0 && a > bound_eps);
            let low = (self.y[i] < 0.0 && a < self.c - bound_eps)
                || (self.y[i] > 0.0 && a > bound_eps);
            if up {
                m = m.max(v);
            }
            if low {
                big_m = big_m.min(v);
            }
        }
        let gap = if m.is_finite() && big_m.is_finite() { m - big_m } else { f64::NEG_INFINITY };
        (m, big_m, gap)
    }

    fn bias(&self, m: f64, big_m: f64) -> f64 {
        let bound_eps = 1e-10 * self.c.max(1.0);
        let mut sum = 0.0;
        let mut free = 0usize;
        for i in 0..self.x.len() {
            let a = self.alpha[i];
            if a > bound_eps && a < self.c - bound_eps {
                sum += self.y[i] - dot(&self.w, &self.x[i]);
                free += 1;
            }
        }
        if free > 0 {
            sum / free as f64
        } else if m.is_finite() && big_m.is_finite() {
            (m + big_m) / 2.0
        } else {
            0.0
        }
    }

    fn objective(&self) -> f64 {
        self.alpha.iter().sum::<f64>() - 0.5 * dot(&self.w, &self.w)
    }
}

/// Trains on samples with labels in `{-1.0, +1.0}`.
pub fn train(
    features: &[Vec<f64>],
    labels: &[f64],
    opts: &TrainOptions,
) -> Result<(SvmModel, TrainReport), SvmError> {
    if features.is_empty() {
        return Err(SvmError::Empty);
    }
    if features.len() != labels.len() {
        return Err(SvmError::BadOptions("features and labels differ in length".into()));
    }
    if opts.c.is_nan() || opts.c <= 0.0 || opts.tolerance.is_nan() || opts.tolerance <= 0.0 {
        return Err(SvmError::BadOptions("c and tolerance must be > 0".into()));
    }
    let dim = features[0].len();
    for (i, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(SvmError::DimensionMismatch { expected: dim, got: f.len() });
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::NonFinite { sample: i });
        }
    }
    let positive_count = labels.iter().filter(|&&y| y > 0.0).count();
    let negative_count = labels.len() - positive_count;
    if positive_count == 0 || negative_count == 0 {
        return Err(SvmError::SingleClass);
    }

    let mut solver = Solver::new(features, labels, opts.c, dim);
    let n = features.len();
    let mut sweeps = 0;
    let (m, big_m, gap) = loop {
        sweeps += 1;
        for i in 0..n {
            for j in i + 1..n {
                solver.pair_update(i, j);
            }
        }
        let (m, big_m, gap) = solver.kkt_gap();
        if gap < opts.tolerance {
            break (m, big_m, gap);
        }
        if sweeps >= opts.max_sweeps {
            return Err(SvmError::NoConvergence { sweeps, violation: gap });
        }
    };

    let bias = solver.bias(m, big_m);
    let bound_eps = 1e-10 * opts.c.max(1.0);
    let support_vectors = solver.alpha.iter().filter(|&&a| a > bound_eps).count();
    let model = SvmModel {
        weights: solver.w.clone(),
        bias,
        c: opts.c,
        positive_count,
        negative_count,
    };
    let report = TrainReport {
        objective: solver.objective(),
        sweeps,
        support_vectors,
        kkt_violation: gap.max(0.0),
        alphas: solver.alpha,
    };
    Ok((model, report))
}

/// Decision value `w . x + b`.
pub fn decision(model: &SvmModel, features: &[f64]) -> Result<f64, SvmError> {
    if features.len() != model.weights.len() {
        return Err(SvmError::DimensionMismatch {
            expected: model.weights.len(),
            got: features.len(),
        });
    }
    Ok(dot(&model.weights, features) + model.bias)
}

/// Per-sample KKT residuals under the trained `(w, b)`: how far each sample
/// violates its complementary-slackness case.
pub fn kkt_residuals(
    model: &SvmModel,
    alphas: &[f64],
    features: &[Vec<f64>],
    labels: &[f64],
) -> Vec<f64> {
    let bound_eps = 1e-10 * model.c.max(1.0);
    features
        .iter()
        .zip(labels)
        .zip(alphas)
        .map(|((x, &y), &a)| {
            let margin = y * (dot(&model.weights, x) + model.bias);
            if a <= bound_eps {
                (1.0 - margin).max(0.0)
            } else if a >= model.c - bound_eps {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            }
        })
        .collect()
}

/// Serializes a model in the `svm-v1` text format: dimension, C, per-class
/// sample counts, bias, then one weight per line at full precision.
pub fn save_model(model: &SvmModel) -> String {
    let mut out = String::new();
    out.push_str("svm-v1\n");
    let _ = writeln!(out, "dim {}", model.weights.len());
    let _ = writeln!(out, "c {}", model.c);
    let _ = writeln!(out, "positive {}", model.positive_count);
    let _ = writeln!(out, "negative {}", model.negative_count);
    let _ = writeln!(out, "bias {}", model.bias);
    for w in &model.weights {
        let _ = writeln!(out, "{w}");
    }
    out
}

pub fn load_model(text: &str) -> Result<SvmModel, SvmError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| SvmError::ModelFormat("empty file".into()))?;
    if header != "svm-v1" {
        return Err(SvmError::ModelFormat(format!("unknown format {header:?}")));
    }
    let mut field = |name: &str| -> Result<String, SvmError> {
        let line = lines
            .next()
            .ok_or_else(|| SvmError::ModelFormat(format!("missing {name}")))?;
        line.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| SvmError::ModelFormat(format!("expected {name} line, got {line:?}")))
    };
    let dim: usize = field("dim")?
        .parse()
        .map_err(|_| SvmError::ModelFormat("bad dim".into()))?;
    let c: f64 = field("c")?.parse().map_err(|_| SvmError::ModelFormat("bad c".into()))?;
    let positive_count: usize = field("positive")?
        .parse()
        .map_err(|_| SvmError::ModelFormat("bad positive count".into()))?;
    let negative_count: usize = field("negative")?
        .parse()
        .map_err(|_| SvmError::ModelFormat("bad negative count".into()))?;
    let bias: f64 = field("bias")?.parse().map_err(|_| SvmError::ModelFormat("bad bias".into()))?;
    let mut weights = Vec::with_capacity(dim);
    for line in lines {
        if line.is_empty() {
            continue;
        }
        weights.push(line.parse().map_err(|_| SvmError::ModelFormat("bad weight".into()))?);
    }
    if weights.len() != dim {
        return Err(SvmError::ModelFormat(format!(
            "dim says {dim} weights, found {}",
            weights.len()
        )));
    }
    Ok(SvmModel { weights, bias, c, positive_count, negative_count })
}
