//! Per-context convolutional scoring head.
//!
//! The subject and relation embeddings of a query are stacked as two input
//! channels, convolved along the embedding axis (`F` filters of odd width
//! `w`, same-length padding), flattened, projected back to width `d`, passed
//! through RReLU and scored against every entity of the query's context by
//! inner product. Softmax turns the scores into a distribution.

use rand::Rng;

use crate::encoder::ContextState;
use crate::numerics::{xavier_init_from, Matrix, ParamId, ParamStore, Tape, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecoderDims {
    pub dim: usize,
    pub channels: usize,
    pub kernel_width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderParams {
    pub conv_kernel: ParamId,
    pub conv_bias: ParamId,
    pub projection: ParamId,
    pub projection_bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderVars {
    pub conv_kernel: Var,
    pub conv_bias: Var,
    pub projection: Var,
    pub projection_bias: Var,
}

impl DecoderParams {
    pub fn register(store: &mut ParamStore, prefix: &str, dims: DecoderDims, rng: &mut impl Rng) -> Result<Self> {
        if dims.kernel_width.is_multiple_of(2) || dims.channels == 0 || dims.dim == 0 {
            return Err(Error::validation(format!(
                "decoder needs odd kernel width and non-zero sizes, got {dims:?}"
            )));
        }
        let DecoderDims {
            dim: d,
            channels: f,
            kernel_width: w,
        } = dims;
        Ok(DecoderParams {
            conv_kernel: store.add(format!("{prefix}.conv.kernel"), xavier_init_from(f, 2 * w, rng)?)?,
            conv_bias: store.add(format!("{prefix}.conv.bias"), Matrix::zeros(1, f))?,
            projection: store.add(format!("{prefix}.projection"), xavier_init_from(f * d, d, rng)?)?,
            projection_bias: store.add(format!("{prefix}.projection.bias"), Matrix::zeros(1, d))?,
        })
    }

    pub fn lookup(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |name: &str| {
            let full = format!("{prefix}.{name}");
            store
                .id(&full)
                .ok_or_else(|| Error::Format(format!("missing tensor {full}")))
        };
        Ok(DecoderParams {
            conv_kernel: get("conv.kernel")?,
            conv_bias: get("conv.bias")?,
            projection: get("projection")?,
            projection_bias: get("projection.bias")?,
        })
    }

    pub fn bind(&self, tape: &mut Tape, store: &ParamStore) -> DecoderVars {
        DecoderVars {
            conv_kernel: tape.param(store, self.conv_kernel),
            conv_bias: tape.param(store, self.conv_bias),
            projection: tape.param(store, self.projection),
            projection_bias: tape.param(store, self.projection_bias),
        }
    }
}

/// `Q x d` query representations for `(subject, relation)` pairs.
pub fn query_vectors(
    tape: &mut Tape,
    state: ContextState,
    pairs: &[(usize, usize)],
    dec: &DecoderVars,
) -> Result<Var> {
    let (n_ent, _) = tape.value(state.entities).shape();
    let (n_rel, _) = tape.value(state.relations).shape();
    for &(s, r) in pairs {
        if s >= n_ent || r >= n_rel {
            return Err(Error::validation(format!(
                "query ({s}, {r}) outside {n_ent} entities / {n_rel} relations"
            )));
        }
    }
    let subj = tape.gather_rows(state.entities, pairs.iter().map(|p| p.0).collect())?;
    let rel = tape.gather_rows(state.relations, pairs.iter().map(|p| p.1).collect())?;
    let stacked = tape.concat_cols(subj, rel)?;
    let conv = tape.conv1d(stacked, dec.conv_kernel, dec.conv_bias, 2)?;
    let proj = tape.matmul(conv, dec.projection)?;
    let proj = tape.add_row(proj, dec.projection_bias)?;
    Ok(tape.rrelu(proj))
}

/// `Q x |E|` candidate distributions.
pub fn score_batch(
    tape: &mut Tape,
    state: ContextState,
    pairs: &[(usize, usize)],
    dec: &DecoderVars,
) -> Result<Var> {
    let q = query_vectors(tape, state, pairs, dec)?;
    let logits = tape.matmul_t(q, state.entities)?;
    tape.softmax(logits)
}

/// A training or evaluation query `(s, r, ?, c)` with known answer `o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Query {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
    pub context: usize,
}

/// Mean cross-entropy over queries, each decoded by its own context branch.
pub fn batch_loss(
    tape: &mut Tape,
    queries: &[Query],
    states: &[ContextState],
    decoders: &[DecoderVars],
) -> Result<Var> {
    if queries.is_empty() {
        return Err(Error::validation("batch loss over an empty query set"));
    }
    if states.len() != decoders.len() {
        return Err(Error::validation("one decoder branch per context state required"));
    }
    let mut total: Option<Var> = None;
    for (c, (&state, dec)) in states.iter().zip(decoders).enumerate() {
        let group: Vec<&Query> = queries.iter().filter(|q| q.context == c).collect();
        if group.is_empty() {
            continue;
        }
        let pairs: Vec<(usize, usize)> = group.iter().map(|q| (q.subject, q.relation)).collect();
        let probs = score_batch(tape, state, &pairs, dec)?;
        let nll = tape.nll_sum(probs, group.iter().map(|q| q.object).collect())?;
        total = Some(match total {
            Some(t) => tape.add(t, nll)?,
            None => nll,
        });
    }
    if let Some(q) = queries.iter().find(|q| q.context >= states.len()) {
        return Err(Error::validation(format!(
            "query context {} out of range for K={}",
            q.context,
            states.len()
        )));
    }
    let total = total.ok_or_else(|| Error::validation("no query matched a context"))?;
    Ok(tape.scale(total, 1.0 / queries.len() as f64))
}

/// Concrete per-context collaborated tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub entities: Vec<Matrix>,
    pub relations: Vec<Matrix>,
}

impl EmbeddingState {
    pub fn contexts(&self) -> usize {
        self.entities.len()
    }
}

/// Everything needed to score queries outside of training.
#[derive(Debug, Clone, Copy)]
pub struct Scorer<'a> {
    pub store: &'a ParamStore,
    pub decoders: &'a [DecoderParams],
    pub rrelu: (f64, f64),
}

impl Scorer<'_> {
    /// Distributions for many `(s, r)` pairs under one context.
    pub fn score_many(&self, state: &EmbeddingState, context: usize, pairs: &[(usize, usize)]) -> Result<Matrix> {
        if context >= state.contexts() || context >= self.decoders.len() {
            return Err(Error::validation(format!(
                "context {context} out of range for K={}",
                state.contexts()
            )));
        }
        let mut tape = Tape::eval(self.rrelu.0, self.rrelu.1)?;
        let st = ContextState {
            entities: tape.constant(state.entities[context].clone()),
            relations: tape.constant(state.relations[context].clone()),
        };
        let dec = self.decoders[context].bind(&mut tape, self.store);
        let probs = score_batch(&mut tape, st, pairs, &dec)?;
        Ok(tape.value(probs).clone())
    }

    /// Row-wise log-probabilities; ranking on these avoids ties from
    /// probabilities that underflow to zero.
    pub fn log_score_many(&self, state: &EmbeddingState, context: usize, pairs: &[(usize, usize)]) -> Result<Matrix> {
        if context >= state.contexts() || context >= self.decoders.len() {
            return Err(Error::validation(format!(
                "context {context} out of range for K={}",
                state.contexts()
            )));
        }
        let mut tape = Tape::eval(self.rrelu.0, self.rrelu.1)?;
        let st = ContextState {
            entities: tape.constant(state.entities[context].clone()),
            relations: tape.constant(state.relations[context].clone()),
        };
        let dec = self.decoders[context].bind(&mut tape, self.store);
        let q = query_vectors(&mut tape, st, pairs, &dec)?;
        let logits = tape.matmul_t(q, st.entities)?;
        log_softmax_rows(tape.value(logits))
    }

    /// Log of the context-averaged distribution.
    pub fn avr_context_log_many(&self, state: &EmbeddingState, pairs: &[(usize, usize)]) -> Result<Matrix> {
        let k = state.contexts();
        if k == 0 {
            return Err(Error::validation("no contexts to average"));
        }
        let logs = (0..k)
            .map(|c| self.log_score_many(state, c, pairs))
            .collect::<Result<Vec<_>>>()?;
        if k == 1 {
            return Ok(logs.into_iter().next().expect("one context"));
        }
        let (rows, cols) = logs[0].shape();
        let ln_k = (k as f64).ln();
        let mut out = Matrix::zeros(rows, cols);
        for (i, o) in out.as_mut_slice().iter_mut().enumerate() {
            let m = logs.iter().map(|l| l.as_slice()[i]).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = logs.iter().map(|l| (l.as_slice()[i] - m).exp()).sum();
            *o = m + sum.ln() - ln_k;
        }
        Ok(out)
    }

    /// Candidate distribution for `(subject, relation)` under `context`.
    pub fn score(&self, state: &EmbeddingState, subject: usize, relation: usize, context: usize) -> Result<Vec<f64>> {
        Ok(self.score_many(state, context, &[(subject, relation)])?.into_vec())
    }

    pub fn predict(&self, state: &EmbeddingState, subject: usize, relation: usize, context: usize) -> Result<usize> {
        Ok(argmax(&self.score(state, subject, relation, context)?))
    }

    /// Mean of the per-context distributions, ignoring the query's context.
    pub fn avr_context_score(&self, state: &EmbeddingState, subject: usize, relation: usize) -> Result<Vec<f64>> {
        Ok(self
            .avr_context_many(state, &[(subject, relation)])?
            .into_vec())
    }

    pub fn avr_context_many(&self, state: &EmbeddingState, pairs: &[(usize, usize)]) -> Result<Matrix> {
        let k = state.contexts();
        if k == 0 {
            return Err(Error::validation("no contexts to average"));
        }
        let mut acc = self.score_many(state, 0, pairs)?;
        if k == 1 {
            return Ok(acc);
        }
        for c in 1..k {
            acc.add_assign(&self.score_many(state, c, pairs)?);
        }
        Ok(acc.scale(1.0 / k as f64))
    }
}

fn log_softmax_rows(logits: &Matrix) -> Result<Matrix> {
    if !logits.is_finite() {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    Ok(out)
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
