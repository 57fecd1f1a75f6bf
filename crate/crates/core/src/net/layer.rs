use crate::error::{Error, Result};
use crate::tensor::{dropout, leaky_relu, leaky_relu_grad, DenseMatrix, DropoutMask, Rng, SparseAdjacency};

/// Where a layer's dropout mask comes from.
pub(crate) trait MaskSource {
    fn apply(&mut self, x: &DenseMatrix) -> Result<(DenseMatrix, DropoutMask)>;
}

/// Draws fresh masks (or none, outside training).
pub(crate) struct Sampled<'a> {
    pub rate: f64,
    pub rng: &'a mut Rng,
    pub training: bool,
}

impl MaskSource for Sampled<'_> {
    fn apply(&mut self, x: &DenseMatrix) -> Result<(DenseMatrix, DropoutMask)> {
        dropout(x, self.rate, self.rng, self.training)
    }
}

/// Reuses masks recorded on an earlier pass, in order.
pub(crate) struct Replayed<'a> {
    pub masks: std::vec::IntoIter<&'a DropoutMask>,
}

impl MaskSource for Replayed<'_> {
    fn apply(&mut self, x: &DenseMatrix) -> Result<(DenseMatrix, DropoutMask)> {
        let mask = self
            .masks
            .next()
            .ok_or_else(|| Error::StaleCache("tape has fewer dropout masks than layers".into()))?;
        Ok((mask.apply(x)?, mask.clone()))
    }
}

/// Per-layer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerConfig {
    pub activate: bool,
    pub slope: f64,
    pub dropout_rate: f64,
}

/// What backward needs from one GCN layer's forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    pub(crate) mask: DropoutMask,
    /// `Â · dropout(H)`
    pub(crate) propagated: DenseMatrix,
    /// Pre-activation output, kept only when the layer is activated.
    pub(crate) pre_activation: Option<DenseMatrix>,
    pub(crate) slope: f64,
    pub(crate) weight_shape: (usize, usize),
}

impl LayerCache {
    pub fn mask(&self) -> &DropoutMask {
        &self.mask
    }

    pub fn pre_activation(&self) -> Option<&DenseMatrix> {
        self.pre_activation.as_ref()
    }
}

/// `Z = act(Â · dropout(H) · W)` with `act` LeakyReLU or identity.
pub fn gcn_layer_forward(
    a_hat: &SparseAdjacency,
    h: &DenseMatrix,
    w: &DenseMatrix,
    cfg: LayerConfig,
    rng: &mut Rng,
    training: bool,
) -> Result<(DenseMatrix, LayerCache)> {
    let mut src = Sampled {
        rate: cfg.dropout_rate,
        rng,
        training,
    };
    layer_forward(a_hat, h, w, cfg, &mut src)
}

pub(crate) fn layer_forward(
    a_hat: &SparseAdjacency,
    h: &DenseMatrix,
    w: &DenseMatrix,
    cfg: LayerConfig,
    masks: &mut dyn MaskSource,
) -> Result<(DenseMatrix, LayerCache)> {
    if a_hat.n() != h.rows() {
        return Err(Error::shape("gcn_layer_forward (Â, H)", (a_hat.n(), a_hat.n()), h.shape()));
    }
    if h.cols() != w.rows() {
        return Err(Error::shape("gcn_layer_forward (H, W)", h.shape(), w.shape()));
    }
    let (dropped, mask) = masks.apply(h)?;
    let propagated = a_hat.spmm(&dropped)?;
    let pre = propagated.matmul(w)?;
    let (out, pre_activation) = if cfg.activate {
        (leaky_relu(&pre, cfg.slope), Some(pre))
    } else {
        (pre, None)
    };
    Ok((
        out,
        LayerCache {
            mask,
            propagated,
            pre_activation,
            slope: cfg.slope,
            weight_shape: w.shape(),
        },
    ))
}

/// Adjoint of [`gcn_layer_forward`]: returns `(∂L/∂H, ∂L/∂W)`.
pub fn gcn_layer_backward(
    a_hat: &SparseAdjacency,
    w: &DenseMatrix,
    grad_z: &DenseMatrix,
    cache: &LayerCache,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if w.shape() != cache.weight_shape {
        return Err(Error::StaleCache(format!(
            "weight is {:?}, cache was built with {:?}",
            w.shape(),
            cache.weight_shape
        )));
    }
    let n = cache.propagated.rows();
    if grad_z.shape() != (n, w.cols()) || a_hat.n() != n {
        return Err(Error::StaleCache(format!(
            "output gradient {:?} does not match cached output ({n}, {})",
            grad_z.shape(),
            w.cols()
        )));
    }
    let grad_pre = match &cache.pre_activation {
        Some(pre) => grad_z.hadamard(&leaky_relu_grad(pre, cache.slope))?,
        None => grad_z.clone(),
    };
    let grad_w = cache.propagated.t_matmul(&grad_pre)?;
    let grad_propagated = grad_pre.matmul_t(w)?;
    let grad_dropped = a_hat.spmm_t(&grad_propagated)?;
    let grad_h = cache.mask.apply(&grad_dropped)?;
    Ok((grad_h, grad_w))
}
