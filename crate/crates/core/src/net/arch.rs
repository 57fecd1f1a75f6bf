use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shortcut {
    /// `X_out = F(X_in) + X_in`
    Identity,
    /// `X_out = F(X_in) + Â X_in W_j`
    Projection,
}

/// A residual block: 1–3 stacked GCN layers with a shortcut around them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub layer_dims: Vec<usize>,
    pub shortcut: Shortcut,
}

impl BlockSpec {
    pub fn identity(dims: &[usize]) -> Self {
        Self {
            layer_dims: dims.to_vec(),
            shortcut: Shortcut::Identity,
        }
    }

    pub fn projection(dims: &[usize]) -> Self {
        Self {
            layer_dims: dims.to_vec(),
            shortcut: Shortcut::Projection,
        }
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated block has layers")
    }
}

/// Layer widths and shortcut layout of a residual GCN.
///
/// The network is: first GCN layer → residual blocks → last GCN layer to
/// `output_dim` → row L2 normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    /// Registry id (1–5) when built from the registry.
    pub model_id: Option<u8>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub first_layer_dim: usize,
    pub blocks: Vec<BlockSpec>,
    /// Apply LeakyReLU after the last layer as well. Off by default: the last
    /// layer feeds L2 normalization directly.
    #[serde(default)]
    pub final_activation: bool,
}

/// Registered model ids.
pub const MODEL_IDS: [u8; 5] = [1, 2, 3, 4, 5];

/// Default model.
pub const DEFAULT_MODEL: u8 = 4;

impl ArchSpec {
    /// Registered architecture at full width.
    pub fn model(id: u8, input_dim: usize, output_dim: usize) -> Result<Self> {
        Self::model_scaled(id, input_dim, output_dim, 1)
    }

    /// Registered architecture with every hidden width divided by `divisor`
    /// (used for small gradient checks).
    pub fn model_scaled(id: u8, input_dim: usize, output_dim: usize, divisor: usize) -> Result<Self> {
        if divisor == 0 || 1024 % divisor != 0 {
            return Err(Error::Config(format!("width divisor {divisor} must divide 1024")));
        }
        let w1 = 1024 / divisor;
        let w2 = 2048 / divisor;
        let (first, blocks) = match id {
            1 => (w1, vec![BlockSpec::identity(&[w1]), BlockSpec::projection(&[w2])]),
            2 => (
                w2,
                vec![BlockSpec::projection(&[w2, w1]), BlockSpec::identity(&[w1, w1])],
            ),
            3 => (
                w2,
                vec![BlockSpec::identity(&[w2, w2]), BlockSpec::projection(&[w2, w1])],
            ),
            4 => (w1, vec![BlockSpec::identity(&[w1, w1, w1])]),
            5 => (w1, vec![BlockSpec::identity(&[w1, w2, w1])]),
            other => return Err(Error::UnknownModel(other)),
        };
        let spec = Self {
            model_id: Some(id),
            input_dim,
            output_dim,
            first_layer_dim: first,
            blocks,
            final_activation: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.first_layer_dim == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        let mut dim = self.first_layer_dim;
        for (b, block) in self.blocks.iter().enumerate() {
            if block.layer_dims.is_empty() || block.layer_dims.len() > 3 {
                return Err(Error::Config(format!(
                    "block {b} has {} layers, expected 1 to 3",
                    block.layer_dims.len()
                )));
            }
            if block.layer_dims.contains(&0) {
                return Err(Error::Config(format!("block {b} has a zero-width layer")));
            }
            if block.shortcut == Shortcut::Identity && block.output_dim() != dim {
                return Err(Error::Config(format!(
                    "identity block {b} maps {dim} to {}; use a projection shortcut",
                    block.output_dim()
                )));
            }
            dim = block.output_dim();
        }
        Ok(())
    }

    /// Width entering the last layer.
    pub fn penultimate_dim(&self) -> usize {
        self.blocks.last().map_or(self.first_layer_dim, BlockSpec::output_dim)
    }

    /// Weight shapes in declaration order: first layer, then each block's
    /// layers followed by its projection (if any), then the last layer.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        self.weight_layout().into_iter().map(|(_, s)| s).collect()
    }

    pub fn weight_names(&self) -> Vec<String> {
        self.weight_layout().into_iter().map(|(n, _)| n).collect()
    }

    fn weight_layout(&self) -> Vec<(String, (usize, usize))> {
        let mut out = vec![("first".to_string(), (self.input_dim, self.first_layer_dim))];
        let mut dim = self.first_layer_dim;
        for (b, block) in self.blocks.iter().enumerate() {
            let block_in = dim;
            for (l, &w) in block.layer_dims.iter().enumerate() {
                out.push((format!("block{b}.layer{l}"), (dim, w)));
                dim = w;
            }
            if block.shortcut == Shortcut::Projection {
                out.push((format!("block{b}.projection"), (block_in, dim)));
            }
        }
        out.push(("last".to_string(), (dim, self.output_dim)));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.weight_shapes().iter().map(|(r, c)| r * c).sum()
    }
}
