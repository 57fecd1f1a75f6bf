use crate::error::{Error, Result};
use crate::net::arch::Shortcut;
use crate::net::layer::{gcn_layer_backward, layer_forward, LayerCache, LayerConfig, MaskSource, Sampled};
use crate::tensor::{DenseMatrix, Rng, SparseAdjacency};

/// Forward state of one residual block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCache {
    pub(crate) layers: Vec<LayerCache>,
    pub(crate) shortcut: Shortcut,
    /// `Â · X_in`, kept for projection shortcuts.
    pub(crate) propagated_input: Option<DenseMatrix>,
}

impl BlockCache {
    pub fn layers(&self) -> &[LayerCache] {
        &self.layers
    }
}

/// Residual block forward pass.
///
/// `weights` holds the branch layer weights in order, followed by the
/// projection weight `W_j` for projection shortcuts. Every branch layer is
/// activated. The shortcut is `X_in` (identity) or `Â X_in W_j` (projection),
/// added elementwise to the branch output.
pub fn residual_block_forward(
    a_hat: &SparseAdjacency,
    x_in: &DenseMatrix,
    weights: &[DenseMatrix],
    shortcut: Shortcut,
    cfg: LayerConfig,
    rng: &mut Rng,
    training: bool,
) -> Result<(DenseMatrix, BlockCache)> {
    let mut src = Sampled {
        rate: cfg.dropout_rate,
        rng,
        training,
    };
    block_forward(a_hat, x_in, weights, shortcut, cfg, &mut src)
}

fn split_weights(weights: &[DenseMatrix], shortcut: Shortcut) -> Result<(&[DenseMatrix], Option<&DenseMatrix>)> {
    match shortcut {
        Shortcut::Identity => Ok((weights, None)),
        Shortcut::Projection => match weights.split_last() {
            Some((proj, layers)) => Ok((layers, Some(proj))),
            None => Err(Error::Config("projection block without weights".into())),
        },
    }
}

pub(crate) fn block_forward(
    a_hat: &SparseAdjacency,
    x_in: &DenseMatrix,
    weights: &[DenseMatrix],
    shortcut: Shortcut,
    cfg: LayerConfig,
    masks: &mut dyn MaskSource,
) -> Result<(DenseMatrix, BlockCache)> {
    let (layer_ws, proj) = split_weights(weights, shortcut)?;
    if layer_ws.is_empty() {
        return Err(Error::Config("residual block without layers".into()));
    }
    let layer_cfg = LayerConfig { activate: true, ..cfg };
    let mut h = x_in.clone();
    let mut layers = Vec::with_capacity(layer_ws.len());
    for w in layer_ws {
        let (z, cache) = layer_forward(a_hat, &h, w, layer_cfg, masks)?;
        layers.push(cache);
        h = z;
    }
    let (out, propagated_input) = match proj {
        None => {
            if h.shape() != x_in.shape() {
                return Err(Error::shape("identity shortcut", h.shape(), x_in.shape()));
            }
            (h.add(x_in)?, None)
        }
        Some(wj) => {
            let ax = a_hat.spmm(x_in)?;
            let skip = ax.matmul(wj)?;
            if skip.shape() != h.shape() {
                return Err(Error::shape("projection shortcut", h.shape(), skip.shape()));
            }
            (h.add(&skip)?, Some(ax))
        }
    };
    Ok((
        out,
        BlockCache {
            layers,
            shortcut,
            propagated_input,
        },
    ))
}

/// Returns `∂L/∂X_in` and the weight gradients in the same order as `weights`.
pub fn residual_block_backward(
    a_hat: &SparseAdjacency,
    weights: &[DenseMatrix],
    grad_out: &DenseMatrix,
    cache: &BlockCache,
) -> Result<(DenseMatrix, Vec<DenseMatrix>)> {
    let (layer_ws, proj) = split_weights(weights, cache.shortcut)?;
    if layer_ws.len() != cache.layers.len() {
        return Err(Error::StaleCache(format!(
            "block has {} layer weights but {} cached layers",
            layer_ws.len(),
            cache.layers.len()
        )));
    }
    let mut grads = vec![DenseMatrix::zeros(0, 0); weights.len()];
    let mut g = grad_out.clone();
    for (l, (w, lc)) in layer_ws.iter().zip(&cache.layers).enumerate().rev() {
        let (gh, gw) = gcn_layer_backward(a_hat, w, &g, lc)?;
        grads[l] = gw;
        g = gh;
    }
    match (proj, &cache.propagated_input) {
        (None, None) => g.add_assign(grad_out)?,
        (Some(wj), Some(ax)) => {
            grads[weights.len() - 1] = ax.t_matmul(grad_out)?;
            let g_ax = grad_out.matmul_t(wj)?;
            g.add_assign(&a_hat.spmm_t(&g_ax)?)?;
        }
        _ => return Err(Error::StaleCache("shortcut kind differs from cache".into())),
    }
    Ok((g, grads))
}
