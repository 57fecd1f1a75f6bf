use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use zslkit::formats::{
    read_class_list, read_class_rows, read_classifiers, read_embeddings, read_features, read_graph_dir,
    read_taxonomy, read_word_vectors, write_class_list, write_features, write_graph_dir, write_id_rows,
    write_taxonomy, write_word_vectors,
};
use zslkit::graph::{load_taxonomy, tokenize_class_name, EmbeddingTable};
use zslkit::harness::{evaluate_set, grad_check, synth_with, EvalSet, GradCheckDims, SynthConfig};
use zslkit::net::{forward, Checkpoint};
use zslkit::{DenseMatrix, GraphBundle, Rng, TrainConfig, ZslDataset};

use crate::{BuildGraphArgs, EvalArgs, GradcheckArgs, SynthArgs, TrainArgs, TrainOverrides};

/// Largest relative error `gradcheck` accepts.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// A computation finished but its result failed a numeric check.
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

/// Writes `text` and a newline to stdout. A closed pipe (`| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

pub fn build_graph(args: BuildGraphArgs) -> Result<()> {
    let index = read_class_list(&args.classes)?;
    let edges = read_taxonomy(&args.taxonomy)?;
    let words = read_word_vectors(&args.word_vectors)?;
    let a = load_taxonomy(&edges, &index).with_context(|| format!("resolving {}", args.taxonomy.display()))?;
    let table = EmbeddingTable::from_word_vectors(index, &words)
        .with_context(|| format!("embedding class names with {}", args.word_vectors.display()))?;
    let bundle = GraphBundle::build(a, &table.vectors, args.k, args.alpha, args.norm.into())?;
    let stats = write_graph_dir(&args.out, &bundle, &table)?;
    for w in &stats.warnings {
        log::warn!("{w}");
    }
    emit(&serde_json::to_string_pretty(&stats)?)?;
    Ok(())
}

impl TrainOverrides {
    fn apply(&self, config: &mut TrainConfig) {
        if let Some(v) = self.model {
            config.model_id = v;
        }
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        if let Some(v) = self.lr {
            config.lr = v;
        }
        if let Some(v) = self.wd {
            config.weight_decay = v;
        }
        if let Some(v) = self.dropout {
            config.dropout = v;
        }
        if let Some(v) = self.slope {
            config.slope = v;
        }
        if let Some(v) = self.norm {
            config.norm_mode = v.into();
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.width_divisor {
            config.width_divisor = v;
        }
        if self.final_activation {
            config.final_activation = true;
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    let Some(path) = path else {
        return Ok(TrainConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(config)
}

/// Graph directory plus, optionally, replacement embeddings.
fn load_graph(dir: &Path, embeddings: Option<&Path>) -> Result<(GraphBundle, EmbeddingTable)> {
    let (bundle, table) = read_graph_dir(dir).with_context(|| format!("reading graph directory {}", dir.display()))?;
    match embeddings {
        Some(p) => Ok((bundle, read_embeddings(p, table.index)?)),
        None => Ok((bundle, table)),
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    args.overrides.apply(&mut config);
    config.validate()?;

    let (bundle, table) = load_graph(&args.graph, args.embeddings.as_deref())?;
    if (bundle.k, bundle.alpha) != (config.k, config.alpha) {
        log::info!(
            "graph was built with k={} alpha={}; config k/alpha are ignored",
            bundle.k,
            bundle.alpha
        );
        config.k = bundle.k;
        config.alpha = bundle.alpha;
    }
    let gt = read_classifiers(&args.gt, &table.index)?;
    let no_eval = EvalSet::new(Vec::new(), DenseMatrix::zeros(0, gt.cols()), Vec::new())?;
    let dataset = ZslDataset::new(table, gt, no_eval)?;
    log::info!(
        "training model {} on {} classes ({} seen), d_w={} D={}",
        config.model_id,
        dataset.index().len(),
        dataset.index().seen_count(),
        dataset.embeddings.dim(),
        dataset.classifier_dim()
    );

    let outcome = zslkit::harness::train(&dataset, &bundle, &config)?;
    outcome
        .checkpoint(config.seed)
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;

    let csv_path = args.loss_csv.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".loss.csv");
        PathBuf::from(p)
    });
    let mut csv = BufWriter::new(fs::File::create(&csv_path).with_context(|| format!("creating {}", csv_path.display()))?);
    writeln!(csv, "epoch,loss")?;
    for (epoch, loss) in outcome.loss_curve.iter().enumerate() {
        writeln!(csv, "{epoch},{loss}")?;
    }
    csv.flush()?;
    if let Some(last) = outcome.loss_curve.last() {
        log::info!("final training loss {last:.6e}");
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let (bundle, table) = load_graph(&args.graph, args.embeddings.as_deref())?;
    let eval_set = read_features(&args.features, &table.index)?;
    let f_pred = match (&args.classifiers, &args.checkpoint) {
        (Some(path), _) => read_class_rows(path, &table.index)?,
        (None, Some(path)) => {
            let ck = Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
            let norm = ck.header.norm_mode;
            let (arch, state) = ck.into_model()?;
            if arch.input_dim != table.dim() {
                bail!(
                    "checkpoint {} expects {}-dimensional embeddings, {} has {}",
                    path.display(),
                    arch.input_dim,
                    args.embeddings.as_deref().unwrap_or(&args.graph).display(),
                    table.dim()
                );
            }
            let bundle = if bundle.norm_mode == norm { bundle } else { bundle.renormalized(norm)? };
            forward(&arch, &state, &bundle.a_hat, &table.vectors, false, &mut Rng::new(0))?.0
        }
        (None, None) => unreachable!("clap requires --checkpoint or --classifiers"),
    };
    if f_pred.cols() != eval_set.features.cols() {
        bail!(
            "classifiers are {}-dimensional but {} has {}-dimensional features",
            f_pred.cols(),
            args.features.display(),
            eval_set.features.cols()
        );
    }
    let report = evaluate_set(&table.index, &eval_set, &f_pred, args.setting.into())?;
    emit(&report.to_json())?;
    Ok(())
}

pub fn gradcheck(args: GradcheckArgs) -> Result<()> {
    let report = grad_check(args.model, GradCheckDims::default(), args.seed)?;
    emit(&serde_json::to_string_pretty(&report)?)?;
    if report.max_rel_error >= GRADCHECK_TOLERANCE {
        return Err(NumericFailure(format!(
            "max relative error {:.3e} in {} is not below {GRADCHECK_TOLERANCE:e}",
            report.max_rel_error, report.worst_weight
        ))
        .into());
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: args.seed,
        n_seen: args.n_seen,
        n_unseen: args.n_unseen,
        embedding_dim: args.dim,
        classifier_dim: args.classifier_dim,
        noise: args.noise,
        samples_per_class: args.samples_per_class,
        ..SynthConfig::default()
    };
    let fx = synth_with(&cfg)?;
    let index = fx.dataset.index();
    let dir = &args.out;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let tokens: Vec<String> = (0..index.len())
        .map(|i| {
            let mut t = tokenize_class_name(index.name(i));
            assert_eq!(t.len(), 1, "synthetic class names are single tokens");
            t.remove(0)
        })
        .collect();
    write_class_list(dir.join("classes.tsv"), index)?;
    write_taxonomy(dir.join("taxonomy.tsv"), &fx.taxonomy)?;
    write_word_vectors(
        dir.join("word_vectors.txt"),
        tokens.iter().enumerate().map(|(i, t)| (t.as_str(), fx.dataset.embeddings.vectors.row(i))),
    )?;
    write_id_rows(dir.join("gt.tsv"), index, 0, &fx.dataset.gt_classifiers)?;
    write_id_rows(dir.join("oracle.tsv"), index, 0, &fx.oracle_classifiers)?;
    write_features(dir.join("features.tsv"), index, &fx.dataset.eval)?;
    log::info!(
        "wrote {} classes and {} samples to {}",
        index.len(),
        fx.dataset.eval.len(),
        dir.display()
    );
    Ok(())
}
