//! Central finite-difference check of the analytic weight gradients.

use serde::Serialize;

use crate::error::Result;
use crate::graph::{normalize_adjacency, NormMode};
use crate::net::{backward, forward, mse_loss_masked, ArchSpec, ForwardTape, Hyper, ModelState};
use crate::tensor::{row_l2_normalize, streams, DenseMatrix, Rng, SparseAdjacency};

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Layers larger than this are checked on a random subsample.
const FULL_CHECK_LIMIT: usize = 4096;
/// Subsample size for large layers.
const SUBSAMPLE: usize = 500;
/// Floor of the relative-error denominator.
const REL_FLOOR: f64 = 1e-8;

/// Problem size for [`grad_check`]. The default is the reduced setting used
/// in tests: hidden widths divided by 64, `D = 32`, 12 nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradCheckDims {
    pub input_dim: usize,
    pub output_dim: usize,
    pub nodes: usize,
    pub width_divisor: usize,
}

impl Default for GradCheckDims {
    fn default() -> Self {
        Self {
            input_dim: 8,
            output_dim: 32,
            nodes: 12,
            width_divisor: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub model_id: Option<u8>,
    pub max_rel_error: f64,
    /// Weight holding the worst entry.
    pub worst_weight: String,
    pub entries_checked: usize,
    /// Entries whose perturbation moved a LeakyReLU input across zero.
    pub entries_skipped: usize,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

/// A model, graph and regression target to differentiate.
#[derive(Debug, Clone)]
pub struct GradProblem {
    pub arch: ArchSpec,
    pub state: ModelState,
    pub a_hat: SparseAdjacency,
    pub inputs: DenseMatrix,
    pub target: DenseMatrix,
    pub seen_mask: Vec<bool>,
}

impl GradProblem {
    /// Random instance with dropout disabled: a random graph with
    /// self-loops, Gaussian inputs, unit-row targets and two thirds of the
    /// nodes seen.
    pub fn random(model_id: u8, dims: GradCheckDims, rng: &mut Rng) -> Result<Self> {
        let arch = ArchSpec::model_scaled(model_id, dims.input_dim, dims.output_dim, dims.width_divisor)?;
        let hyper = Hyper {
            dropout_rate: 0.0,
            ..Hyper::default()
        };
        let state = ModelState::glorot(&arch, hyper, rng)?;
        let n = dims.nodes;
        let mut coords: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        for i in 0..n {
            for j in i + 1..n {
                if rng.uniform() < 0.3 {
                    coords.push((i, j));
                    coords.push((j, i));
                }
            }
        }
        let c = SparseAdjacency::from_pattern(n, coords)?;
        let a_hat = normalize_adjacency(&c, NormMode::RandomWalk)?;
        let inputs = DenseMatrix::from_fn(n, dims.input_dim, |_, _| rng.normal());
        let target = row_l2_normalize(
            &DenseMatrix::from_fn(n, dims.output_dim, |_, _| rng.normal()),
            1e-12,
        );
        let seen = n.div_ceil(3) * 2;
        let seen_mask = (0..n).map(|i| i < seen.min(n)).collect();
        Ok(Self {
            arch,
            state,
            a_hat,
            inputs,
            target,
            seen_mask,
        })
    }

    fn predict(&self, state: &ModelState) -> Result<(DenseMatrix, ForwardTape)> {
        let mut unused = Rng::new(0);
        forward(&self.arch, state, &self.a_hat, &self.inputs, false, &mut unused)
    }

    fn evaluate(&self, state: &ModelState) -> Result<(f64, DenseMatrix, ForwardTape)> {
        let (pred, tape) = self.predict(state)?;
        let (loss, grad) = mse_loss_masked(&pred, &self.target, &self.seen_mask)?;
        Ok((loss, grad, tape))
    }

    /// `L(plus) - L(minus)` for the masked MSE, expanded as
    /// `Σ (f₊ - f₋)(f₊ + f₋ - 2t) / (M·D)` so that the two nearly equal losses
    /// are never subtracted directly.
    fn loss_difference(&self, plus: &DenseMatrix, minus: &DenseMatrix) -> f64 {
        let seen: Vec<usize> = (0..self.seen_mask.len()).filter(|&i| self.seen_mask[i]).collect();
        let mut sum = 0.0;
        for &r in &seen {
            for ((p, m), t) in plus.row(r).iter().zip(minus.row(r)).zip(self.target.row(r)) {
                sum += (p - m) * (p + m - 2.0 * t);
            }
        }
        sum / (seen.len() * self.target.cols()) as f64
    }

    /// Analytic gradients of the masked MSE loss.
    pub fn analytic(&self) -> Result<Vec<DenseMatrix>> {
        let (_, grad, tape) = self.evaluate(&self.state)?;
        backward(&self.arch, &self.state, &self.a_hat, &tape, &grad)
    }

    /// Compares analytic gradients with central differences. `rng` picks the
    /// subsample for layers above the full-check limit.
    pub fn check(&self, rng: &mut Rng) -> Result<GradCheckReport> {
        self.check_against(&self.analytic()?, rng)
    }

    pub(crate) fn check_against(&self, analytic: &[DenseMatrix], rng: &mut Rng) -> Result<GradCheckReport> {
        let (_, _, base_tape) = self.evaluate(&self.state)?;
        let base_signs = signs(&base_tape);
        let mut state = self.state.clone();
        let mut report = GradCheckReport {
            model_id: self.arch.model_id,
            max_rel_error: 0.0,
            worst_weight: String::new(),
            entries_checked: 0,
            entries_skipped: 0,
            max_abs_analytic: 0.0,
            max_abs_numeric: 0.0,
        };
        for (w, ga) in analytic.iter().enumerate() {
            let len = ga.data().len();
            let entries: Vec<usize> = if len <= FULL_CHECK_LIMIT {
                (0..len).collect()
            } else {
                let mut all: Vec<usize> = (0..len).collect();
                rng.shuffle(&mut all);
                all.truncate(SUBSAMPLE);
                all.sort_unstable();
                all
            };
            for e in entries {
                let original = state.weights[w].data()[e];
                state.weights[w].data_mut()[e] = original + FD_STEP;
                let (plus, tape_plus) = self.predict(&state)?;
                state.weights[w].data_mut()[e] = original - FD_STEP;
                let (minus, tape_minus) = self.predict(&state)?;
                state.weights[w].data_mut()[e] = original;
                if signs(&tape_plus) != base_signs || signs(&tape_minus) != base_signs {
                    report.entries_skipped += 1;
                    continue;
                }
                let gn = self.loss_difference(&plus, &minus) / (2.0 * FD_STEP);
                let g = ga.data()[e];
                let rel = (g - gn).abs() / g.abs().max(gn.abs()).max(REL_FLOOR);
                report.entries_checked += 1;
                report.max_abs_analytic = report.max_abs_analytic.max(g.abs());
                report.max_abs_numeric = report.max_abs_numeric.max(gn.abs());
                if rel > report.max_rel_error || report.worst_weight.is_empty() {
                    report.max_rel_error = report.max_rel_error.max(rel);
                    report.worst_weight = self.state.names[w].clone();
                }
            }
        }
        Ok(report)
    }
}

fn signs(tape: &ForwardTape) -> Vec<bool> {
    tape.pre_activations()
        .iter()
        .flat_map(|m| m.data().iter().map(|&v| v > 0.0))
        .collect()
}

/// Gradient check of a registered model on a random reduced instance.
pub fn grad_check(model_id: u8, dims: GradCheckDims, seed: u64) -> Result<GradCheckReport> {
    let mut rng = Rng::with_stream(seed, streams::GRADCHECK);
    let problem = GradProblem::random(model_id, dims, &mut rng)?;
    problem.check(&mut rng)
}
