//! Training configuration, per-timestamp optimisation and early stopping.

use std::fmt::Write as _;
use std::time::Instant;

use crate::checkpoint::Checkpoint;
use crate::collab::build_incidence;
use crate::config::KeyValues;
use crate::eval::{evaluate_split, EvalOptions, Metrics};
use crate::event::{DatasetSplits, SnapshotSequence, Vocab};
use crate::model::{Model, Variant};
use crate::numerics::{adam_step, check_rrelu_bounds, derive_seed, seeded_rng, AdamConfig, Tape};
use crate::{Error, Result};

pub const CONFIG_KEYS: [&str; 15] = [
    "dim",
    "layers",
    "hyper_layers",
    "history",
    "contexts",
    "lr",
    "weight_decay",
    "max_epochs",
    "patience",
    "seed",
    "rrelu_lower",
    "rrelu_upper",
    "channels",
    "kernel_width",
    "variant",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Embedding width `d`.
    pub dim: usize,
    /// Message-passing layers `L`.
    pub layers: usize,
    /// Hypergraph propagation layers `P` (0 disables mixing).
    pub hyper_layers: usize,
    /// History window length `D`.
    pub history: usize,
    /// Context count `K`.
    pub contexts: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub rrelu_lower: f64,
    pub rrelu_upper: f64,
    /// Decoder filters `F`.
    pub channels: usize,
    /// Decoder kernel width `w` (odd).
    pub kernel_width: usize,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 200,
            layers: 2,
            hyper_layers: 1,
            history: 3,
            contexts: 3,
            lr: 1e-3,
            weight_decay: 1e-5,
            max_epochs: 30,
            patience: 5,
            seed: 42,
            rrelu_lower: crate::numerics::RRELU_LOWER,
            rrelu_upper: crate::numerics::RRELU_UPPER,
            channels: 50,
            kernel_width: 3,
            variant: Variant::Full,
        }
    }
}

impl TrainConfig {
    /// Parses a config file on top of the defaults.
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        cfg.apply_text(text, file)?;
        Ok(cfg)
    }

    /// Overrides the fields named in `text`.
    pub fn apply_text(&mut self, text: &str, file: &str) -> Result<()> {
        let kv = KeyValues::parse(text, file, &CONFIG_KEYS)?;
        kv.apply("dim", &mut self.dim)?;
        kv.apply("layers", &mut self.layers)?;
        kv.apply("hyper_layers", &mut self.hyper_layers)?;
        kv.apply("history", &mut self.history)?;
        kv.apply("contexts", &mut self.contexts)?;
        kv.apply("lr", &mut self.lr)?;
        kv.apply("weight_decay", &mut self.weight_decay)?;
        kv.apply("max_epochs", &mut self.max_epochs)?;
        kv.apply("patience", &mut self.patience)?;
        kv.apply("seed", &mut self.seed)?;
        kv.apply("rrelu_lower", &mut self.rrelu_lower)?;
        kv.apply("rrelu_upper", &mut self.rrelu_upper)?;
        kv.apply("channels", &mut self.channels)?;
        kv.apply("kernel_width", &mut self.kernel_width)?;
        kv.apply("variant", &mut self.variant)?;
        Ok(())
    }

    /// Serialises every field; `parse(to_text())` reproduces `self` exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| writeln!(s, "{k} = {v}").expect("write to string");
        put("dim", &self.dim);
        put("layers", &self.layers);
        put("hyper_layers", &self.hyper_layers);
        put("history", &self.history);
        put("contexts", &self.contexts);
        put("lr", &self.lr);
        put("weight_decay", &self.weight_decay);
        put("max_epochs", &self.max_epochs);
        put("patience", &self.patience);
        put("seed", &self.seed);
        put("rrelu_lower", &self.rrelu_lower);
        put("rrelu_upper", &self.rrelu_upper);
        put("channels", &self.channels);
        put("kernel_width", &self.kernel_width);
        put("variant", &self.variant);
        s
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("layers", self.layers),
            ("history", self.history),
            ("contexts", self.contexts),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("channels", self.channels),
        ];
        if let Some((name, _)) = positive.iter().find(|p| p.1 == 0) {
            return Err(Error::validation(format!("{name} must be at least 1")));
        }
        if self.kernel_width.is_multiple_of(2) {
            return Err(Error::validation(format!(
                "kernel_width must be odd, got {}",
                self.kernel_width
            )));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::validation(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::validation(format!(
                "weight_decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        check_rrelu_bounds(self.rrelu_lower, self.rrelu_upper)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// One optimiser step predicting snapshot `target` from the `D` snapshots
/// before it. Returns the pre-step loss, or `None` when `target` is empty.
pub fn train_step(model: &mut Model, train: &SnapshotSequence, target: usize, epoch: usize) -> Result<Option<f64>> {
    let targets = match train.snapshot(target) {
        Some(s) if !s.is_empty() => s,
        Some(_) => return Ok(None),
        None => {
            return Err(Error::validation(format!(
                "target time {target} outside the training split"
            )))
        }
    };
    if target <= train.start() {
        return Err(Error::validation(format!("target time {target} has no history")));
    }
    let history = train.history_window(target - 1, model.config.history)?;
    let rng = seeded_rng(derive_seed(model.config.seed, &[epoch as u64, target as u64]));
    let mut tape = Tape::train(model.config.rrelu_lower, model.config.rrelu_upper, rng)?;
    let loss = model.loss(&mut tape, &history, targets).map_err(|e| match e {
        Error::Numeric(m) => Error::Numeric(format!("{m} at epoch {epoch}, timestamp {target}")),
        other => other,
    })?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value} at epoch {epoch}, timestamp {target}")));
    }
    let grads = tape.backward(loss)?;
    model.store.zero_grads();
    tape.accumulate_param_grads(&grads, &mut model.store);
    if !model.store.grads_finite() {
        return Err(Error::Numeric(format!(
            "non-finite gradient at epoch {epoch}, timestamp {target}"
        )));
    }
    let hyper = model.config.adam();
    adam_step(&mut model.store, &hyper);
    Ok(Some(value))
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub valid: Metrics,
    pub seconds: f64,
}

impl EpochLog {
    /// Tab-separated: epoch, loss, MRR, HIT@1, HIT@3, HIT@10, seconds.
    pub fn line(&self) -> String {
        format!("{}\t{:.3}", self.metrics_line(), self.seconds)
    }

    /// [`line`](Self::line) without the wall-clock column.
    pub fn metrics_line(&self) -> String {
        format!(
            "{}\t{:.10}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.epoch, self.mean_loss, self.valid.mrr, self.valid.hit1, self.valid.hit3, self.valid.hit10
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    /// Worker threads for validation scoring.
    pub threads: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { threads: 1 }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Best-validation-MRR state.
    pub checkpoint: Checkpoint,
    pub logs: Vec<EpochLog>,
}

/// Trains from scratch, keeping the state with the best validation MRR.
pub fn fit(
    vocab: &Vocab,
    splits: &DatasetSplits,
    config: TrainConfig,
    opts: FitOptions,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<FitOutcome> {
    let incidence = build_incidence(&splits.train, vocab);
    let model = Model::new(config, vocab, incidence)?;
    fit_model(model, splits, opts, on_epoch)
}

/// Continues training an already constructed model.
pub fn fit_model(
    mut model: Model,
    splits: &DatasetSplits,
    opts: FitOptions,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<FitOutcome> {
    let timeline = splits.timeline();
    let train = &splits.train;
    let eval_opts = EvalOptions {
        threads: opts.threads,
        ..EvalOptions::default()
    };
    let mut best: Option<Checkpoint> = None;
    let mut logs = Vec::new();
    let mut stale = 0;
    for epoch in 1..=model.config.max_epochs {
        let started = Instant::now();
        let mut total = 0.0;
        let mut steps = 0usize;
        for target in train.start() + 1..train.end() {
            if let Some(loss) = train_step(&mut model, train, target, epoch)? {
                total += loss;
                steps += 1;
            }
        }
        if steps == 0 {
            return Err(Error::validation("training split has no non-empty target timestamps"));
        }
        let valid = evaluate_split(&model, &timeline, &splits.valid, &splits.masked_entities, eval_opts)?.overall;
        let log = EpochLog {
            epoch,
            mean_loss: total / steps as f64,
            valid,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        logs.push(log);
        match &best {
            Some(b) if valid.mrr <= b.best_valid_mrr => stale += 1,
            _ => {
                stale = 0;
                best = Some(Checkpoint {
                    model: model.clone(),
                    epoch,
                    best_valid_mrr: valid.mrr,
                    data_dir: None,
                });
            }
        }
        if stale >= model.config.patience {
            break;
        }
    }
    Ok(FitOutcome {
        checkpoint: best.expect("at least one epoch ran"),
        logs,
    })
}
