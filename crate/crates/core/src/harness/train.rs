use crate::error::{Error, Result};
use crate::graph::{GraphBundle, NormMode};
use crate::harness::{TrainConfig, ZslDataset};
use crate::net::{adam_step, backward, forward, mse_loss_masked, ArchSpec, Checkpoint, ModelState};
use crate::tensor::{streams, DenseMatrix, Rng, SparseAdjacency};

/// Result of [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub arch: ArchSpec,
    pub state: ModelState,
    /// Normalization of the adjacency the model was trained on.
    pub norm_mode: NormMode,
    /// Training loss at each epoch, measured before that epoch's update.
    pub loss_curve: Vec<f64>,
}

impl TrainOutcome {
    /// Eval-mode classifiers for every node, with `bundle` renormalized to
    /// the training mode if needed.
    pub fn predict(&self, bundle: &GraphBundle, dataset: &ZslDataset) -> Result<DenseMatrix> {
        if bundle.norm_mode == self.norm_mode {
            predict_classifiers(&self.arch, &self.state, bundle, dataset)
        } else {
            predict_classifiers(&self.arch, &self.state, &bundle.renormalized(self.norm_mode)?, dataset)
        }
    }

    pub fn checkpoint(&self, seed: u64) -> Checkpoint {
        Checkpoint::new(&self.arch, &self.state, self.norm_mode, seed)
    }
}

/// Architecture for `config` and the dataset's input/output widths.
pub fn arch_for(config: &TrainConfig, dataset: &ZslDataset) -> Result<ArchSpec> {
    let mut arch = ArchSpec::model_scaled(
        config.model_id,
        dataset.embeddings.dim(),
        dataset.classifier_dim(),
        config.width_divisor,
    )?;
    arch.final_activation = config.final_activation;
    Ok(arch)
}

/// Full-graph training: one forward/backward/Adam step per epoch.
pub fn train(dataset: &ZslDataset, bundle: &GraphBundle, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(dataset, bundle, config)?;
    for _ in 0..config.epochs {
        trainer.step()?;
    }
    Ok(trainer.finish())
}

/// Step-by-step form of [`train`].
#[derive(Debug)]
pub struct Trainer<'a> {
    dataset: &'a ZslDataset,
    a_hat: SparseAdjacency,
    arch: ArchSpec,
    state: ModelState,
    norm_mode: NormMode,
    dropout_rng: Rng,
    target: DenseMatrix,
    mask: Vec<bool>,
    loss_curve: Vec<f64>,
}

impl<'a> Trainer<'a> {
    /// Validates inputs and draws the initial weights from stream `INIT`.
    pub fn new(dataset: &'a ZslDataset, bundle: &GraphBundle, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let n = dataset.index().len();
        if bundle.n() != n {
            return Err(Error::Config(format!(
                "graph has {} nodes but the dataset has {n} classes",
                bundle.n()
            )));
        }
        let a_hat = if bundle.norm_mode == config.norm_mode {
            bundle.a_hat.clone()
        } else {
            bundle.renormalized(config.norm_mode)?.a_hat
        };
        let arch = arch_for(config, dataset)?;
        let mut init_rng = Rng::with_stream(config.seed, streams::INIT);
        let state = ModelState::glorot(&arch, config.hyper(), &mut init_rng)?;
        Ok(Self {
            dataset,
            a_hat,
            arch,
            state,
            norm_mode: config.norm_mode,
            dropout_rng: Rng::with_stream(config.seed, streams::DROPOUT),
            target: dataset.targets(),
            mask: dataset.index().seen_mask(),
            loss_curve: Vec::with_capacity(config.epochs),
        })
    }

    /// Runs one epoch and returns the loss measured before the update.
    pub fn step(&mut self) -> Result<f64> {
        let epoch = self.loss_curve.len();
        let p = &self.dataset.embeddings.vectors;
        let (pred, tape) = forward(&self.arch, &self.state, &self.a_hat, p, true, &mut self.dropout_rng)
            .map_err(|e| diverged(epoch, &self.state, e))?;
        let (loss, grad) = mse_loss_masked(&pred, &self.target, &self.mask)?;
        if !loss.is_finite() {
            return Err(diverged(epoch, &self.state, Error::NonFinite("loss".into())));
        }
        self.loss_curve.push(loss);
        let grads = backward(&self.arch, &self.state, &self.a_hat, &tape, &grad)?;
        adam_step(&mut self.state, &grads).map_err(|e| diverged(epoch, &self.state, e))?;
        if epoch % 50 == 0 {
            log::debug!("epoch {epoch}: loss {loss:.6e}");
        }
        Ok(loss)
    }

    pub fn epochs_run(&self) -> usize {
        self.loss_curve.len()
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    /// Eval-mode masked MSE of the current weights.
    pub fn eval_loss(&self) -> Result<f64> {
        let mut unused = Rng::new(0);
        let p = &self.dataset.embeddings.vectors;
        let (f, _) = forward(&self.arch, &self.state, &self.a_hat, p, false, &mut unused)?;
        Ok(mse_loss_masked(&f, &self.target, &self.mask)?.0)
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            arch: self.arch,
            state: self.state,
            norm_mode: self.norm_mode,
            loss_curve: self.loss_curve,
        }
    }
}

fn diverged(epoch: usize, state: &ModelState, cause: Error) -> Error {
    if !matches!(cause, Error::NonFinite(_)) {
        return cause;
    }
    let layers: Vec<String> = state
        .names
        .iter()
        .zip(&state.weights)
        .map(|(name, w)| {
            if w.is_finite() {
                format!("{name} max|w|={:.3e}", w.max_abs())
            } else {
                format!("{name} non-finite")
            }
        })
        .collect();
    Error::NonFinite(format!("{cause} at epoch {epoch} ({})", layers.join(", ")))
}

/// Eval-mode (no dropout) forward pass over `bundle.a_hat`.
pub fn predict_classifiers(
    arch: &ArchSpec,
    state: &ModelState,
    bundle: &GraphBundle,
    dataset: &ZslDataset,
) -> Result<DenseMatrix> {
    let mut unused = Rng::new(0);
    let (f, _) = forward(arch, state, &bundle.a_hat, &dataset.embeddings.vectors, false, &mut unused)?;
    Ok(f)
}

/// Eval-mode masked MSE on the seen rows.
pub fn seen_mse(arch: &ArchSpec, state: &ModelState, bundle: &GraphBundle, dataset: &ZslDataset) -> Result<f64> {
    let f = predict_classifiers(arch, state, bundle, dataset)?;
    let (loss, _) = mse_loss_masked(&f, &dataset.targets(), &dataset.index().seen_mask())?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth_dataset;

    fn small() -> TrainConfig {
        TrainConfig {
            width_divisor: 64,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_state() {
        let fx = synth_dataset(1, 4, 3, 6, 8, 0.0).unwrap();
        let cfg = TrainConfig { epochs: 0, ..small() };
        let out = train(&fx.dataset, &fx.bundle, &cfg).unwrap();
        assert!(out.loss_curve.is_empty());
        let mut rng = Rng::with_stream(cfg.seed, streams::INIT);
        let fresh = ModelState::glorot(&out.arch, cfg.hyper(), &mut rng).unwrap();
        assert_eq!(out.state, fresh);
    }

    #[test]
    fn same_seed_same_weights() {
        let fx = synth_dataset(2, 5, 3, 6, 8, 0.0).unwrap();
        let cfg = TrainConfig { epochs: 20, ..small() };
        let a = train(&fx.dataset, &fx.bundle, &cfg).unwrap();
        let b = train(&fx.dataset, &fx.bundle, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train(&fx.dataset, &fx.bundle, &TrainConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.state.weights, c.state.weights);
    }

    #[test]
    fn loss_decreases() {
        let fx = synth_dataset(3, 6, 3, 6, 8, 0.0).unwrap();
        let cfg = TrainConfig {
            epochs: 200,
            dropout: 0.0,
            lr: 0.01,
            ..small()
        };
        let out = train(&fx.dataset, &fx.bundle, &cfg).unwrap();
        assert_eq!(out.loss_curve.len(), 200);
        assert!(out.loss_curve[199] < 0.5 * out.loss_curve[0]);
    }

    #[test]
    fn divergence_names_the_epoch() {
        let fx = synth_dataset(3, 6, 3, 6, 8, 0.0).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            lr: 1e308,
            ..small()
        };
        match train(&fx.dataset, &fx.bundle, &cfg) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("epoch"), "{msg}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn node_count_mismatch() {
        let fx = synth_dataset(1, 4, 3, 6, 8, 0.0).unwrap();
        let other = synth_dataset(1, 5, 3, 6, 8, 0.0).unwrap();
        assert!(train(&fx.dataset, &other.bundle, &small()).is_err());
    }
}
