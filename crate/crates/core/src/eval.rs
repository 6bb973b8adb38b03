//! Ranking metrics, split evaluation and the ablation sweep.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::event::{DatasetSplits, EventQuintuple, SnapshotSequence, Vocab};
use crate::model::{Model, Variant};
use crate::numerics::Matrix;
use crate::train::{fit, FitOptions, TrainConfig};
use crate::{Error, Result};

/// 1-based rank of `truth`: one plus the number of strictly higher scores.
pub fn rank_of_truth(scores: &[f64], truth: usize) -> Result<usize> {
    let target = *scores.get(truth).ok_or_else(|| {
        Error::validation(format!("truth id {truth} out of range for {} candidates", scores.len()))
    })?;
    Ok(1 + scores.iter().filter(|&&s| s > target).count())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hit1: f64,
    pub hit3: f64,
    pub hit10: f64,
    pub n_queries: usize,
}

pub fn compute_metrics(ranks: &[usize]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::validation("no ranks to aggregate"));
    }
    if ranks.contains(&0) {
        return Err(Error::validation("ranks are 1-based"));
    }
    let n = ranks.len() as f64;
    let hit = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(Metrics {
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        hit1: hit(1),
        hit3: hit(3),
        hit10: hit(10),
        n_queries: ranks.len(),
    })
}

/// Overall metrics plus one entry per context (`None` when it had no queries).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub overall: Metrics,
    pub per_context: Vec<Option<Metrics>>,
}

impl MetricsReport {
    /// Aggregates `(context, rank)` pairs.
    pub fn from_ranks(ranks: &[(usize, usize)], contexts: usize) -> Result<Self> {
        let all: Vec<usize> = ranks.iter().map(|r| r.1).collect();
        let overall = compute_metrics(&all)?;
        let mut per_context = Vec::with_capacity(contexts);
        for c in 0..contexts {
            let sub: Vec<usize> = ranks.iter().filter(|r| r.0 == c).map(|r| r.1).collect();
            per_context.push(if sub.is_empty() { None } else { Some(compute_metrics(&sub)?) });
        }
        Ok(MetricsReport { overall, per_context })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialize")
    }

    /// Aligned plain-text table; context names come from `vocab` when given.
    pub fn table(&self, vocab: Option<&Vocab>) -> String {
        let mut rows = vec![("all".to_string(), Some(self.overall))];
        for (c, m) in self.per_context.iter().enumerate() {
            let name = vocab
                .and_then(|v| v.context_name(c))
                .map(str::to_string)
                .unwrap_or_else(|| c.to_string());
            rows.push((format!("ctx {name}"), *m));
        }
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(5);
        let mut out = format!(
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}\n",
            "scope", "MRR", "HIT@1", "HIT@3", "HIT@10", "queries"
        );
        for (name, m) in rows {
            match m {
                Some(m) => writeln!(
                    out,
                    "{name:<width$}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8}",
                    m.mrr, m.hit1, m.hit3, m.hit10, m.n_queries
                ),
                None => writeln!(out, "{name:<width$}  {:>8}  {:>8}  {:>8}  {:>8}  {:>8}", "-", "-", "-", "-", 0),
            }
            .expect("write to string");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Drop other objects true for the same `(s, r, c)` at the query time.
    pub filtered: bool,
    /// Score with the mean of all context heads instead of the query's own.
    pub avr_context: bool,
    pub threads: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            filtered: false,
            avr_context: false,
            threads: 1,
        }
    }
}

/// Ranks every unmasked query of `split`, encoding the `D` snapshots of
/// `timeline` that precede each query time.
pub fn evaluate_split(
    model: &Model,
    timeline: &SnapshotSequence,
    split: &SnapshotSequence,
    masked: &BTreeSet<usize>,
    opts: EvalOptions,
) -> Result<MetricsReport> {
    let work: Vec<(usize, Vec<EventQuintuple>)> = split
        .iter()
        .map(|(t, snap)| (t, snap.iter().filter(|e| !masked.contains(&e.object)).copied().collect::<Vec<_>>()))
        .filter(|(_, qs)| !qs.is_empty())
        .collect();
    if work.is_empty() {
        return Err(Error::validation("no queries left to evaluate after masking"));
    }
    let run = |(t, queries): &(usize, Vec<EventQuintuple>)| -> Result<Vec<(usize, usize)>> {
        let snapshot = split.snapshot(*t).unwrap_or(&[]);
        rank_timestamp(model, timeline, *t, queries, snapshot, opts)
    };
    let per_time: Vec<Result<Vec<(usize, usize)>>> = if opts.threads <= 1 {
        work.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::validation(format!("thread pool: {e}")))?;
        pool.install(|| work.par_iter().map(run).collect())
    };
    let mut ranks = Vec::new();
    for r in per_time {
        ranks.extend(r?);
    }
    MetricsReport::from_ranks(&ranks, model.contexts())
}

fn rank_timestamp(
    model: &Model,
    timeline: &SnapshotSequence,
    t: usize,
    queries: &[EventQuintuple],
    snapshot: &[EventQuintuple],
    opts: EvalOptions,
) -> Result<Vec<(usize, usize)>> {
    let history = if t == 0 {
        Vec::new()
    } else {
        timeline.history_window(t - 1, model.config.history)?
    };
    let state = model.embed(&history)?;
    let scorer = model.scorer();
    let mut ranks = vec![(0, 0); queries.len()];
    if opts.avr_context {
        let pairs: Vec<_> = queries.iter().map(|q| (q.subject, q.relation)).collect();
        let probs = scorer.avr_context_log_many(&state, &pairs)?;
        fill_ranks(&probs, queries, (0..queries.len()).collect(), snapshot, opts.filtered, &mut ranks)?;
    } else {
        for c in 0..model.contexts() {
            let idx: Vec<usize> = (0..queries.len()).filter(|&i| queries[i].context == c).collect();
            if idx.is_empty() {
                continue;
            }
            let pairs: Vec<_> = idx.iter().map(|&i| (queries[i].subject, queries[i].relation)).collect();
            let probs = scorer.log_score_many(&state, c, &pairs)?;
            fill_ranks(&probs, queries, idx, snapshot, opts.filtered, &mut ranks)?;
        }
    }
    if let Some(q) = queries.iter().find(|q| q.context >= model.contexts()) {
        return Err(Error::validation(format!("query {q:?} has a context outside K")));
    }
    Ok(ranks)
}

// `scores` rows are log-probabilities.
fn fill_ranks(
    probs: &Matrix,
    queries: &[EventQuintuple],
    idx: Vec<usize>,
    snapshot: &[EventQuintuple],
    filtered: bool,
    out: &mut [(usize, usize)],
) -> Result<()> {
    for (row, i) in idx.into_iter().enumerate() {
        let q = &queries[i];
        let mut scores = probs.row(row).to_vec();
        if filtered {
            for e in snapshot {
                if e.subject == q.subject && e.relation == q.relation && e.context == q.context && e.object != q.object {
                    scores[e.object] = f64::NEG_INFINITY;
                }
            }
        }
        out[i] = (q.context, rank_of_truth(&scores, q.object)?);
    }
    Ok(())
}

/// Test-split metrics of one trained variant.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: MetricsReport,
}

/// Trains `variant` from scratch and evaluates it on the test split.
pub fn run_ablation(
    variant: Variant,
    vocab: &Vocab,
    splits: &DatasetSplits,
    config: &TrainConfig,
    opts: EvalOptions,
    on_epoch: &mut dyn FnMut(&crate::train::EpochLog),
) -> Result<MetricsReport> {
    let mut config = config.clone();
    config.variant = variant;
    let outcome = fit(vocab, splits, config, FitOptions { threads: opts.threads }, on_epoch)?;
    let eval_opts = EvalOptions {
        avr_context: variant == Variant::AvrContext,
        ..opts
    };
    evaluate_split(
        &outcome.checkpoint.model,
        &splits.timeline(),
        &splits.test,
        &splits.masked_entities,
        eval_opts,
    )
}

/// Aligned comparison table for several variants.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut out = format!(
        "{:<12}  {:>8}  {:>8}  {:>8}  {:>8}\n",
        "variant", "MRR", "HIT@1", "HIT@3", "HIT@10"
    );
    for r in rows {
        let m = r.report.overall;
        writeln!(
            out,
            "{:<12}  {:>8.4}  {:>8.4}  {:>8.4}  {:>8.4}",
            r.variant.name(),
            m.mrr,
            m.hit1,
            m.hit3,
            m.hit10
        )
        .expect("write to string");
    }
    out
}
