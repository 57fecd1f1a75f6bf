use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::arch::{ArchSpec, BlockSpec, Shortcut};
use crate::net::block::{block_forward, residual_block_backward, BlockCache};
use crate::net::layer::{gcn_layer_backward, layer_forward, LayerCache, LayerConfig, MaskSource, Replayed, Sampled};
use crate::tensor::{streams, DenseMatrix, DropoutMask, Rng, SparseAdjacency};

/// Guard for all-zero output rows in the final L2 normalization.
pub const OUTPUT_NORM_EPS: f64 = 1e-12;

/// Optimizer and regularization settings carried with the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub dropout_rate: f64,
    pub slope: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Self {
            lr: 0.001,
            weight_decay: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            dropout_rate: 0.5,
            slope: 0.2,
        }
    }
}

impl Hyper {
    pub(crate) fn layer_config(&self, activate: bool) -> LayerConfig {
        LayerConfig {
            activate,
            slope: self.slope,
            dropout_rate: self.dropout_rate,
        }
    }
}

/// Weights in [`ArchSpec::weight_shapes`] order plus Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub names: Vec<String>,
    pub weights: Vec<DenseMatrix>,
    pub adam_m: Vec<DenseMatrix>,
    pub adam_v: Vec<DenseMatrix>,
    pub step: u64,
    pub hyper: Hyper,
}

impl ModelState {
    /// Glorot-uniform weights, `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`,
    /// drawn in declaration order.
    pub fn glorot(arch: &ArchSpec, hyper: Hyper, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let weights = arch
            .weight_shapes()
            .into_iter()
            .map(|(r, c)| {
                let limit = (6.0 / (r + c) as f64).sqrt();
                DenseMatrix::from_fn(r, c, |_, _| rng.uniform_in(-limit, limit))
            })
            .collect();
        Self::from_weights(arch, hyper, weights)
    }

    /// Wraps explicit weights, with zeroed optimizer state.
    pub fn from_weights(arch: &ArchSpec, hyper: Hyper, weights: Vec<DenseMatrix>) -> Result<Self> {
        let shapes = arch.weight_shapes();
        if shapes.len() != weights.len() {
            return Err(Error::Config(format!(
                "architecture declares {} weights, got {}",
                shapes.len(),
                weights.len()
            )));
        }
        let names = arch.weight_names();
        for ((w, s), name) in weights.iter().zip(&shapes).zip(&names) {
            if w.shape() != *s {
                return Err(Error::Config(format!(
                    "weight `{name}` should be {s:?}, got {:?}",
                    w.shape()
                )));
            }
        }
        let zeros: Vec<DenseMatrix> = shapes.iter().map(|&(r, c)| DenseMatrix::zeros(r, c)).collect();
        Ok(Self {
            names,
            adam_m: zeros.clone(),
            adam_v: zeros,
            weights,
            step: 0,
            hyper,
        })
    }
}

/// Registered architecture with default hyper-parameters and seeded Glorot weights.
pub fn build_model(model_id: u8, input_dim: usize, output_dim: usize, seed: u64) -> Result<(ArchSpec, ModelState)> {
    let arch = ArchSpec::model(model_id, input_dim, output_dim)?;
    let mut rng = Rng::with_stream(seed, streams::INIT);
    let state = ModelState::glorot(&arch, Hyper::default(), &mut rng)?;
    Ok((arch, state))
}

/// Everything backward needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTape {
    pub(crate) first: LayerCache,
    pub(crate) blocks: Vec<BlockCache>,
    pub(crate) last: LayerCache,
    /// Last-layer output before L2 normalization.
    pub(crate) raw: DenseMatrix,
    pub(crate) output: DenseMatrix,
}

impl ForwardTape {
    pub fn output(&self) -> &DenseMatrix {
        &self.output
    }

    /// Dropout masks in layer order.
    pub fn masks(&self) -> Vec<&DropoutMask> {
        let mut out = vec![&self.first.mask];
        for b in &self.blocks {
            out.extend(b.layers.iter().map(|l| &l.mask));
        }
        out.push(&self.last.mask);
        out
    }

    /// Pre-activations of every activated layer, in layer order.
    pub fn pre_activations(&self) -> Vec<&DenseMatrix> {
        std::iter::once(&self.first)
            .chain(self.blocks.iter().flat_map(|b| b.layers.iter()))
            .chain(std::iter::once(&self.last))
            .filter_map(|l| l.pre_activation.as_ref())
            .collect()
    }
}

/// Full-graph forward pass. Returns L2-normalized classifier rows.
pub fn forward(
    arch: &ArchSpec,
    state: &ModelState,
    a_hat: &SparseAdjacency,
    p: &DenseMatrix,
    training: bool,
    rng: &mut Rng,
) -> Result<(DenseMatrix, ForwardTape)> {
    let mut src = Sampled {
        rate: state.hyper.dropout_rate,
        rng,
        training,
    };
    forward_with(arch, state, a_hat, p, &mut src)
}

/// Re-runs a forward pass with the dropout masks recorded in `tape`.
pub fn replay(
    arch: &ArchSpec,
    state: &ModelState,
    a_hat: &SparseAdjacency,
    p: &DenseMatrix,
    tape: &ForwardTape,
) -> Result<(DenseMatrix, ForwardTape)> {
    let mut src = Replayed {
        masks: tape.masks().into_iter(),
    };
    forward_with(arch, state, a_hat, p, &mut src)
}

fn check_weights(arch: &ArchSpec, state: &ModelState) -> Result<()> {
    let shapes = arch.weight_shapes();
    if shapes.len() != state.weights.len()
        || shapes.iter().zip(&state.weights).any(|(s, w)| *s != w.shape())
    {
        return Err(Error::Config("model state does not match architecture".into()));
    }
    Ok(())
}

fn forward_with(
    arch: &ArchSpec,
    state: &ModelState,
    a_hat: &SparseAdjacency,
    p: &DenseMatrix,
    masks: &mut dyn MaskSource,
) -> Result<(DenseMatrix, ForwardTape)> {
    check_weights(arch, state)?;
    if p.rows() != a_hat.n() {
        return Err(Error::shape("forward (Â, P)", (a_hat.n(), a_hat.n()), p.shape()));
    }
    let hyper = &state.hyper;
    let (mut h, first) = layer_forward(a_hat, p, &state.weights[0], hyper.layer_config(true), masks)?;

    let mut blocks = Vec::with_capacity(arch.blocks.len());
    let mut offset = 1;
    for spec in &arch.blocks {
        let count = block_weight_count(spec);
        let ws = &state.weights[offset..offset + count];
        offset += count;
        let (out, cache) = block_forward(a_hat, &h, ws, spec.shortcut, hyper.layer_config(true), masks)?;
        blocks.push(cache);
        h = out;
    }

    let last_w = &state.weights[offset];
    let (raw, last) = layer_forward(a_hat, &h, last_w, hyper.layer_config(arch.final_activation), masks)?;
    let output = crate::tensor::row_l2_normalize(&raw, OUTPUT_NORM_EPS);
    if !output.is_finite() {
        return Err(Error::NonFinite("forward output".into()));
    }
    Ok((
        output.clone(),
        ForwardTape {
            first,
            blocks,
            last,
            raw,
            output,
        },
    ))
}

fn block_weight_count(spec: &BlockSpec) -> usize {
    spec.layer_dims.len() + usize::from(spec.shortcut == Shortcut::Projection)
}

/// Backward through row L2 normalization `y = x / max(‖x‖, eps)`.
fn l2_normalize_backward(raw: &DenseMatrix, out: &DenseMatrix, grad_out: &DenseMatrix) -> DenseMatrix {
    let mut g = DenseMatrix::zeros(raw.rows(), raw.cols());
    for r in 0..raw.rows() {
        let x = raw.row(r);
        let y = out.row(r);
        let gy = grad_out.row(r);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let row = g.row_mut(r);
        if norm >= OUTPUT_NORM_EPS {
            let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
            for ((gx, &yv), &gv) in row.iter_mut().zip(y).zip(gy) {
                *gx = (gv - yv * dot) / norm;
            }
        } else {
            for (gx, &gv) in row.iter_mut().zip(gy) {
                *gx = gv / OUTPUT_NORM_EPS;
            }
        }
    }
    g
}

/// Gradients of a scalar loss with respect to every weight, given
/// `grad_output = ∂L/∂F_pred`. Returned in declaration order.
pub fn backward(
    arch: &ArchSpec,
    state: &ModelState,
    a_hat: &SparseAdjacency,
    tape: &ForwardTape,
    grad_output: &DenseMatrix,
) -> Result<Vec<DenseMatrix>> {
    check_weights(arch, state)?;
    if grad_output.shape() != tape.output.shape() {
        return Err(Error::StaleCache(format!(
            "output gradient {:?} vs forward output {:?}",
            grad_output.shape(),
            tape.output.shape()
        )));
    }
    if tape.blocks.len() != arch.blocks.len() {
        return Err(Error::StaleCache("tape block count differs from architecture".into()));
    }
    let mut grads = vec![DenseMatrix::zeros(0, 0); state.weights.len()];
    let last_idx = state.weights.len() - 1;

    let g_raw = l2_normalize_backward(&tape.raw, &tape.output, grad_output);
    let (mut g, gw) = gcn_layer_backward(a_hat, &state.weights[last_idx], &g_raw, &tape.last)?;
    grads[last_idx] = gw;

    let mut end = last_idx;
    for (spec, cache) in arch.blocks.iter().zip(&tape.blocks).rev() {
        let start = end - block_weight_count(spec);
        let (gx, gws) = residual_block_backward(a_hat, &state.weights[start..end], &g, cache)?;
        for (slot, gw) in grads[start..end].iter_mut().zip(gws) {
            *slot = gw;
        }
        g = gx;
        end = start;
    }
    debug_assert_eq!(end, 1);
    let (_, gw) = gcn_layer_backward(a_hat, &state.weights[0], &g, &tape.first)?;
    grads[0] = gw;
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::arch::MODEL_IDS;

    fn random_graph(n: usize, rng: &mut Rng) -> SparseAdjacency {
        let mut coords: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        for i in 0..n {
            for j in i + 1..n {
                if rng.uniform() < 0.3 {
                    coords.push((i, j));
                    coords.push((j, i));
                }
            }
        }
        let c = SparseAdjacency::from_pattern(n, coords).unwrap();
        crate::graph::normalize_adjacency(&c, crate::graph::NormMode::RandomWalk).unwrap()
    }

    #[test]
    fn outputs_are_unit_rows() {
        let mut rng = Rng::new(3);
        let arch = ArchSpec::model_scaled(4, 8, 16, 64).unwrap();
        let state = ModelState::glorot(&arch, Hyper::default(), &mut rng).unwrap();
        let a = random_graph(10, &mut rng);
        let p = DenseMatrix::from_fn(10, 8, |_, _| rng.normal());
        let (f, _) = forward(&arch, &state, &a, &p, false, &mut rng).unwrap();
        for r in 0..10 {
            let n: f64 = f.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut rng = Rng::new(5);
        for id in MODEL_IDS {
            let arch = ArchSpec::model_scaled(id, 6, 8, 64).unwrap();
            let state = ModelState::glorot(&arch, Hyper::default(), &mut rng).unwrap();
            let a = random_graph(7, &mut rng);
            let p = DenseMatrix::from_fn(7, 6, |_, _| rng.normal());
            let (f1, _) = forward(&arch, &state, &a, &p, false, &mut Rng::new(1)).unwrap();
            let (f2, _) = forward(&arch, &state, &a, &p, false, &mut Rng::new(2)).unwrap();
            assert_eq!(f1, f2);
        }
    }

    #[test]
    fn replaying_a_training_tape_is_bit_exact() {
        let mut rng = Rng::new(8);
        let arch = ArchSpec::model_scaled(2, 6, 8, 64).unwrap();
        let state = ModelState::glorot(&arch, Hyper::default(), &mut rng).unwrap();
        let a = random_graph(9, &mut rng);
        let p = DenseMatrix::from_fn(9, 6, |_, _| rng.normal());
        let (f, tape) = forward(&arch, &state, &a, &p, true, &mut rng).unwrap();
        assert!(tape.masks().iter().any(|m| m.kept_fraction() < 1.0));
        let (again, tape2) = replay(&arch, &state, &a, &p, &tape).unwrap();
        assert_eq!(f, again);
        assert_eq!(tape, tape2);
    }

    #[test]
    fn build_model_default_is_seeded() {
        let (arch, s1) = build_model(4, 12, 10, 9).unwrap();
        let (_, s2) = build_model(4, 12, 10, 9).unwrap();
        let (_, s3) = build_model(4, 12, 10, 10).unwrap();
        assert_eq!(arch.first_layer_dim, 1024);
        assert_eq!(s1, s2);
        assert_ne!(s1.weights[0], s3.weights[0]);
        let limit = (6.0f64 / (12.0 + 1024.0)).sqrt();
        assert!(s1.weights[0].max_abs() <= limit);
        assert!(matches!(build_model(6, 12, 10, 0), Err(Error::UnknownModel(6))));
    }

    #[test]
    fn wrong_embedding_rows() {
        let mut rng = Rng::new(1);
        let arch = ArchSpec::model_scaled(4, 4, 4, 64).unwrap();
        let state = ModelState::glorot(&arch, Hyper::default(), &mut rng).unwrap();
        let a = SparseAdjacency::identity(3);
        assert!(forward(&arch, &state, &a, &DenseMatrix::zeros(4, 4), false, &mut rng).is_err());
    }
}
