//! Context labels from source documents: TF-IDF vectors clustered by K-means.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::Rng;

use crate::event::EventQuintuple;
use crate::numerics::seeded_rng;
use crate::{Error, Result};

/// Lowercases, strips non-alphanumerics and drops tokens shorter than 2.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
        .filter(|w| w.chars().count() >= 2)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocVectors {
    /// Lexicographically sorted vocabulary.
    pub terms: Vec<String>,
    /// Sparse `(term index, weight)` rows, L2-normalised unless all-zero.
    pub vectors: Vec<Vec<(usize, f64)>>,
    /// Documents whose vector is all zeros.
    pub empty: Vec<bool>,
}

impl DocVectors {
    pub fn dense(&self) -> Vec<Vec<f64>> {
        self.vectors
            .iter()
            .map(|v| {
                let mut row = vec![0.0; self.terms.len()];
                for &(j, w) in v {
                    row[j] = w;
                }
                row
            })
            .collect()
    }
}

/// TF-IDF with `tf = count / length` and `idf = ln(N / df)`.
pub fn vectorize(documents: &[Vec<String>]) -> Result<DocVectors> {
    if documents.is_empty() {
        return Err(Error::validation("corpus has no documents"));
    }
    if documents.iter().all(Vec::is_empty) {
        return Err(Error::validation("every document is empty after tokenization"));
    }
    let terms: Vec<String> = documents
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<&str, usize> = terms.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut df = vec![0usize; terms.len()];
    let counts: Vec<BTreeMap<usize, usize>> = documents
        .iter()
        .map(|doc| {
            let mut c = BTreeMap::new();
            for t in doc {
                *c.entry(index[t.as_str()]).or_insert(0) += 1;
            }
            for &j in c.keys() {
                df[j] += 1;
            }
            c
        })
        .collect();
    let n = documents.len() as f64;
    let mut vectors = Vec::with_capacity(documents.len());
    let mut empty = Vec::with_capacity(documents.len());
    for (doc, c) in documents.iter().zip(counts) {
        let len = doc.len() as f64;
        let mut v: Vec<(usize, f64)> = c
            .into_iter()
            .map(|(j, k)| (j, k as f64 / len * (n / df[j] as f64).ln()))
            .filter(|&(_, w)| w != 0.0)
            .collect();
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        for (_, w) in &mut v {
            *w /= norm;
        }
        empty.push(v.is_empty());
        vectors.push(v);
    }
    Ok(DocVectors { terms, vectors, empty })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Inertia after seeding and after every Lloyd iteration.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn inertia(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = sq_dist(p, &centroids[0]);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(p, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    points
        .iter()
        .map(|p| p.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<_>>())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Seeded k-means++ followed by Lloyd iterations.
///
/// Points only switch cluster when strictly closer to another centroid, and
/// a centroid update that would raise the inertia is rejected, so the
/// inertia sequence never increases.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::validation("k-means needs K >= 1"));
    }
    let dim = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::validation("points differ in dimension"));
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(Error::validation(format!(
            "K={k} exceeds the {distinct} distinct vectors"
        )));
    }

    let mut rng = seeded_rng(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let c = points[pick.expect("a point with positive distance exists")].clone();
        for (p, d) in points.iter().zip(&mut d2) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }

    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    let mut history = vec![inertia(points, &labels, &centroids)];
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let updated = update_centroids(points, &labels, &centroids);
        let current = *history.last().expect("seeded inertia");
        let centroids_next = if inertia(points, &labels, &updated) <= current {
            updated
        } else {
            centroids.clone()
        };
        let mut changed = false;
        let mut next_labels = labels.clone();
        for (p, l) in points.iter().zip(&mut next_labels) {
            let j = nearest(p, &centroids_next);
            if sq_dist(p, &centroids_next[j]) < sq_dist(p, &centroids_next[*l]) {
                *l = j;
                changed = true;
            }
        }
        centroids = centroids_next;
        labels = next_labels;
        history.push(inertia(points, &labels, &centroids));
        if !changed {
            break;
        }
    }
    Ok(KMeansResult {
        labels,
        centroids,
        inertia: history,
        iterations,
    })
}

// Empty clusters keep their previous centroid.
fn update_centroids(points: &[Vec<f64>], labels: &[usize], old: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = old[0].len();
    let mut sums = vec![vec![0.0; dim]; old.len()];
    let mut counts = vec![0usize; old.len()];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(old)
        .map(|((s, n), o)| {
            if n == 0 {
                o.clone()
            } else {
                s.into_iter().map(|v| v / n as f64).collect()
            }
        })
        .collect()
}

/// An event without a context label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventQuadruple {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
    pub time: usize,
}

/// Parses `s<TAB>r<TAB>o<TAB>t` lines.
pub fn parse_quadruples(text: &str, file: &str) -> Result<Vec<EventQuadruple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_ints(line, 4, file, i)?;
        out.push(EventQuadruple {
            subject: v[0],
            relation: v[1],
            object: v[2],
            time: v[3],
        });
    }
    Ok(out)
}

/// Parses `event-line<TAB>doc-line` pairs (both 0-based line indices).
pub fn parse_doc_map(text: &str, file: &str) -> Result<BTreeMap<usize, usize>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = parse_ints(line, 2, file, i)?;
        if map.insert(v[0], v[1]).is_some() {
            return Err(Error::Parse {
                file: file.to_string(),
                line: i + 1,
                message: format!("event {} mapped twice", v[0]),
            });
        }
    }
    Ok(map)
}

fn parse_ints(line: &str, arity: usize, file: &str, i: usize) -> Result<Vec<usize>> {
    let err = |message: String| Error::Parse {
        file: file.to_string(),
        line: i + 1,
        message,
    };
    let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
    if fields.len() != arity {
        return Err(err(format!("expected {arity} tab-separated fields, found {}", fields.len())));
    }
    fields
        .iter()
        .map(|f| f.parse().map_err(|_| err(format!("{f:?} is not a non-negative integer"))))
        .collect()
}

/// Labels each event with the cluster of its source document.
pub fn assign_contexts(
    events: &[EventQuadruple],
    doc_of_event: &BTreeMap<usize, usize>,
    labels: &[usize],
) -> Result<Vec<EventQuintuple>> {
    events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let doc = doc_of_event
                .get(&i)
                .ok_or_else(|| Error::validation(format!("event {i} {e:?} has no source document")))?;
            let label = labels.get(*doc).ok_or_else(|| {
                Error::validation(format!("event {i} maps to document {doc}, which has no label"))
            })?;
            Ok(EventQuintuple::new(e.subject, e.relation, e.object, e.time, *label))
        })
        .collect()
}

/// The `n` heaviest terms of each centroid, one line per cluster.
pub fn top_terms_report(vectors: &DocVectors, result: &KMeansResult, n: usize) -> String {
    let mut out = String::new();
    for (c, centroid) in result.centroids.iter().enumerate() {
        let mut idx: Vec<usize> = (0..centroid.len()).filter(|&j| centroid[j] > 0.0).collect();
        idx.sort_by(|&a, &b| centroid[b].total_cmp(&centroid[a]).then(a.cmp(&b)));
        let words: Vec<&str> = idx.iter().take(n).map(|&j| vectors.terms[j].as_str()).collect();
        writeln!(out, "{c}\t{}", words.join(" ")).expect("write to string");
    }
    out
}
