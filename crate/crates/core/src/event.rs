//! Quintuple events, vocabularies, snapshot sequences and dataset files.
//!
//! A dataset directory holds:
//!
//! * `train.txt`, `valid.txt`, `test.txt` — `s\tr\to\tt\tc` per line
//! * `entity2id.txt`, `relation2id.txt`, `context2id.txt` — `name\tid`
//! * `stat.txt` — `|E|\t|R|\tK`
//! * `masked_entities.txt` (optional) — one entity id per line
//!
//! Files store original relations only. [`load_dataset`] appends the inverse
//! of every event (relation id shifted by `|R|`), so every query is an
//! object query.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventQuintuple {
    pub subject: usize,
    pub relation: usize,
    pub object: usize,
    pub time: usize,
    pub context: usize,
}

impl EventQuintuple {
    pub fn new(subject: usize, relation: usize, object: usize, time: usize, context: usize) -> Self {
        EventQuintuple {
            subject,
            relation,
            object,
            time,
            context,
        }
    }

    /// Ordering key inside a snapshot.
    fn snapshot_key(&self) -> (usize, usize, usize, usize) {
        (self.subject, self.relation, self.object, self.context)
    }
}

/// Dense id ↔ name tables for entities, relations and contexts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    entities: Vec<String>,
    relations: Vec<String>,
    contexts: Vec<String>,
}

impl Vocab {
    pub fn new(entities: Vec<String>, relations: Vec<String>, contexts: Vec<String>) -> Result<Self> {
        for (kind, names) in [("entity", &entities), ("relation", &relations), ("context", &contexts)] {
            let unique: BTreeSet<&String> = names.iter().collect();
            if unique.len() != names.len() {
                return Err(Error::validation(format!("duplicate {kind} names in vocabulary")));
            }
            if names.is_empty() {
                return Err(Error::validation(format!("empty {kind} vocabulary")));
            }
        }
        Ok(Vocab {
            entities,
            relations,
            contexts,
        })
    }

    /// Vocabulary with generated names `e0…`, `r0…`, `c0…`.
    pub fn numbered(entities: usize, relations: usize, contexts: usize) -> Result<Self> {
        let names = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect();
        Vocab::new(names("e", entities), names("r", relations), names("c", contexts))
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// `|R|`, original relations only.
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// `|R'| = 2|R|` after inverse augmentation.
    pub fn num_relations_augmented(&self) -> usize {
        2 * self.relations.len()
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn entity_name(&self, id: usize) -> Option<&str> {
        self.entities.get(id).map(String::as_str)
    }

    pub fn relation_name(&self, id: usize) -> Option<String> {
        let r = self.relations.len();
        if id < r {
            Some(self.relations[id].clone())
        } else {
            self.relations.get(id - r).map(|n| format!("inverse:{n}"))
        }
    }

    pub fn context_name(&self, id: usize) -> Option<&str> {
        self.contexts.get(id).map(String::as_str)
    }

    pub fn fingerprint(&self) -> VocabFingerprint {
        let mut h = Sha256::new();
        for names in [&self.entities, &self.relations, &self.contexts] {
            h.update((names.len() as u64).to_le_bytes());
            for n in names {
                h.update((n.len() as u64).to_le_bytes());
                h.update(n.as_bytes());
            }
        }
        VocabFingerprint {
            entities: self.num_entities() as u64,
            relations: self.num_relations() as u64,
            contexts: self.num_contexts() as u64,
            digest: h.finalize().into(),
        }
    }
}

/// Size triple plus content hash of a [`Vocab`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabFingerprint {
    pub entities: u64,
    pub relations: u64,
    pub contexts: u64,
    pub digest: [u8; 32],
}

impl VocabFingerprint {
    pub fn check(&self, other: &VocabFingerprint) -> Result<()> {
        if self.contexts != other.contexts {
            return Err(Error::Compatibility(format!(
                "checkpoint has K={} contexts, dataset has K={}",
                self.contexts, other.contexts
            )));
        }
        if (self.entities, self.relations) != (other.entities, other.relations) {
            return Err(Error::Compatibility(format!(
                "checkpoint vocabulary is {}x{}, dataset is {}x{}",
                self.entities, self.relations, other.entities, other.relations
            )));
        }
        if self.digest != other.digest {
            return Err(Error::Compatibility("vocabulary names differ from checkpoint".into()));
        }
        Ok(())
    }
}

/// Day-indexed snapshots; entry `i` holds the events with time `start + i`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SnapshotSequence {
    start: usize,
    snapshots: Vec<Vec<EventQuintuple>>,
}

impl SnapshotSequence {
    /// Groups `events` into `horizon` snapshots starting at time `start`.
    pub fn from_events(
        events: impl IntoIterator<Item = EventQuintuple>,
        start: usize,
        horizon: usize,
    ) -> Result<Self> {
        let mut snapshots = vec![Vec::new(); horizon];
        for e in events {
            if e.time < start || e.time >= start + horizon {
                return Err(Error::validation(format!(
                    "event at time {} outside sequence {start}..{}",
                    e.time,
                    start + horizon
                )));
            }
            snapshots[e.time - start].push(e);
        }
        for s in &mut snapshots {
            s.sort_by_key(EventQuintuple::snapshot_key);
        }
        Ok(SnapshotSequence { start, snapshots })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    /// One past the last timestamp.
    pub fn end(&self) -> usize {
        self.start + self.snapshots.len()
    }

    pub fn horizon(&self) -> usize {
        self.snapshots.len()
    }

    pub fn contains_time(&self, t: usize) -> bool {
        t >= self.start && t < self.end()
    }

    pub fn snapshot(&self, t: usize) -> Option<&[EventQuintuple]> {
        t.checked_sub(self.start)
            .and_then(|i| self.snapshots.get(i))
            .map(Vec::as_slice)
    }

    /// `(time, events)` pairs in time order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[EventQuintuple])> {
        self.snapshots
            .iter()
            .enumerate()
            .map(move |(i, s)| (self.start + i, s.as_slice()))
    }

    pub fn events(&self) -> impl Iterator<Item = &EventQuintuple> {
        self.snapshots.iter().flatten()
    }

    pub fn num_events(&self) -> usize {
        self.snapshots.iter().map(Vec::len).sum()
    }

    /// Snapshots `max(start, t + 1 - window) ..= t` in time order.
    pub fn history_window(&self, t: usize, window: usize) -> Result<Vec<&[EventQuintuple]>> {
        if window == 0 {
            return Err(Error::validation("history window length must be at least 1"));
        }
        if !self.contains_time(t) {
            return Err(Error::validation(format!(
                "time {t} outside sequence {}..{}",
                self.start,
                self.end()
            )));
        }
        let first = (t + 1).saturating_sub(window).max(self.start);
        Ok((first..=t).map(|u| self.snapshots[u - self.start].as_slice()).collect())
    }
}

/// Free-function form of [`SnapshotSequence::history_window`].
pub fn history_window(
    seq: &SnapshotSequence,
    t: usize,
    window: usize,
) -> Result<Vec<&[EventQuintuple]>> {
    seq.history_window(t, window)
}

/// The per-context sub-graphs of one snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextPartition {
    pub sub_graphs: Vec<Vec<EventQuintuple>>,
}

/// Splits a snapshot by context label, preserving input order within each part.
pub fn partition_by_context(snapshot: &[EventQuintuple], contexts: usize) -> Result<ContextPartition> {
    let mut sub_graphs = vec![Vec::new(); contexts];
    for e in snapshot {
        let part = sub_graphs.get_mut(e.context).ok_or_else(|| {
            Error::validation(format!("context {} out of range for K={contexts}", e.context))
        })?;
        part.push(*e);
    }
    Ok(ContextPartition { sub_graphs })
}

/// Returns the events followed by their inverses `(o, r + |R|, s, t, c)`.
pub fn add_inverse_events(events: &[EventQuintuple], num_relations: usize) -> Result<Vec<EventQuintuple>> {
    let mut out = Vec::with_capacity(events.len() * 2);
    out.extend_from_slice(events);
    for e in events {
        if e.relation >= num_relations {
            return Err(Error::validation(format!(
                "relation {} out of range for |R|={num_relations}",
                e.relation
            )));
        }
        out.push(EventQuintuple::new(
            e.object,
            e.relation + num_relations,
            e.subject,
            e.time,
            e.context,
        ));
    }
    Ok(out)
}

/// Train/valid/test sequences over one contiguous timeline (inverse events included).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplits {
    pub train: SnapshotSequence,
    pub valid: SnapshotSequence,
    pub test: SnapshotSequence,
    pub masked_entities: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitKind {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitKind::Train),
            "valid" => Ok(SplitKind::Valid),
            "test" => Ok(SplitKind::Test),
            other => Err(Error::validation(format!("unknown split {other:?}"))),
        }
    }
}

/// Boundaries `(train_end, valid_end)` of an 8/1/1 split over `horizon` timestamps.
pub fn split_points(horizon: usize) -> Result<(usize, usize)> {
    if horizon < 3 {
        return Err(Error::validation(format!(
            "need at least 3 timestamps for a train/valid/test split, got {horizon}"
        )));
    }
    let train_end = (horizon * 8 / 10).clamp(1, horizon - 2);
    let valid_end = (horizon * 9 / 10).clamp(train_end + 1, horizon - 1);
    Ok((train_end, valid_end))
}

impl DatasetSplits {
    /// Builds 8/1/1 time splits from original (non-inverse) events.
    pub fn from_original_events(
        events: &[EventQuintuple],
        vocab: &Vocab,
        horizon: usize,
        masked_entities: BTreeSet<usize>,
    ) -> Result<Self> {
        for e in events {
            validate_event(e, vocab, vocab.num_relations())?;
        }
        let (train_end, valid_end) = split_points(horizon)?;
        let all = add_inverse_events(events, vocab.num_relations())?;
        let pick = |lo: usize, hi: usize| all.iter().copied().filter(move |e| e.time >= lo && e.time < hi);
        Ok(DatasetSplits {
            train: SnapshotSequence::from_events(pick(0, train_end), 0, train_end)?,
            valid: SnapshotSequence::from_events(pick(train_end, valid_end), train_end, valid_end - train_end)?,
            test: SnapshotSequence::from_events(pick(valid_end, horizon), valid_end, horizon - valid_end)?,
            masked_entities,
        })
    }

    pub fn split(&self, kind: SplitKind) -> &SnapshotSequence {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Valid => &self.valid,
            SplitKind::Test => &self.test,
        }
    }

    /// All three splits as one sequence starting at time 0.
    pub fn timeline(&self) -> SnapshotSequence {
        let mut snapshots = Vec::with_capacity(self.test.end());
        for seq in [&self.train, &self.valid, &self.test] {
            snapshots.resize(seq.start(), Vec::new());
            snapshots.extend(seq.snapshots.iter().cloned());
        }
        SnapshotSequence { start: 0, snapshots }
    }
}

fn validate_event(e: &EventQuintuple, vocab: &Vocab, relation_bound: usize) -> Result<()> {
    let ne = vocab.num_entities();
    if e.subject >= ne || e.object >= ne {
        return Err(Error::validation(format!(
            "entity id out of range for |E|={ne} in {e:?}"
        )));
    }
    if e.relation >= relation_bound {
        return Err(Error::validation(format!(
            "relation id out of range for |R|={relation_bound} in {e:?}"
        )));
    }
    if e.context >= vocab.num_contexts() {
        return Err(Error::validation(format!(
            "context id out of range for K={} in {e:?}",
            vocab.num_contexts()
        )));
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Parses a five-column quintuple file.
pub fn parse_quintuples(text: &str, file: &str) -> Result<Vec<EventQuintuple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                file: file.to_string(),
                line: i + 1,
                message: format!("expected 5 tab-separated fields, found {}", fields.len()),
            });
        }
        let mut v = [0usize; 5];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| Error::Parse {
                file: file.to_string(),
                line: i + 1,
                message: format!("{f:?} is not a non-negative integer"),
            })?;
        }
        out.push(EventQuintuple::new(v[0], v[1], v[2], v[3], v[4]));
    }
    Ok(out)
}

/// Reads a `name<TAB>id` vocabulary file into id order.
pub fn read_vocab_file(path: &Path) -> Result<Vec<String>> {
    let file = file_label(path);
    let text = read_text(path)?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (name, id) = line.rsplit_once('\t').ok_or_else(|| Error::Parse {
            file: file.clone(),
            line: i + 1,
            message: "expected name<TAB>id".into(),
        })?;
        let id: usize = id.trim().parse().map_err(|_| Error::Parse {
            file: file.clone(),
            line: i + 1,
            message: format!("{id:?} is not a non-negative integer id"),
        })?;
        entries.push((id, name.to_string()));
    }
    entries.sort();
    for (expect, (id, _)) in entries.iter().enumerate() {
        if *id != expect {
            return Err(Error::validation(format!(
                "{file}: ids must be dense and 0-based, missing or duplicate id {expect}"
            )));
        }
    }
    Ok(entries.into_iter().map(|(_, n)| n).collect())
}

/// Loads a dataset directory; inverse events are added to every split.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Vocab, DatasetSplits)> {
    let dir = dir.as_ref();
    let vocab = Vocab::new(
        read_vocab_file(&dir.join("entity2id.txt"))?,
        read_vocab_file(&dir.join("relation2id.txt"))?,
        read_vocab_file(&dir.join("context2id.txt"))?,
    )?;

    let stat_path = dir.join("stat.txt");
    let stat = read_text(&stat_path)?;
    let counts: Vec<usize> = stat
        .split_whitespace()
        .map(|f| f.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Parse {
            file: "stat.txt".into(),
            line: 1,
            message: "expected three integers".into(),
        })?;
    if counts != [vocab.num_entities(), vocab.num_relations(), vocab.num_contexts()] {
        return Err(Error::validation(format!(
            "stat.txt {counts:?} disagrees with vocabulary sizes ({}, {}, {})",
            vocab.num_entities(),
            vocab.num_relations(),
            vocab.num_contexts()
        )));
    }

    let mut parts = Vec::with_capacity(3);
    for name in ["train.txt", "valid.txt", "test.txt"] {
        let events = parse_quintuples(&read_text(&dir.join(name))?, name)?;
        for e in &events {
            validate_event(e, &vocab, vocab.num_relations())
                .map_err(|err| Error::validation(format!("{name}: {err}")))?;
        }
        parts.push(add_inverse_events(&events, vocab.num_relations())?);
    }

    let max_time = |evs: &[EventQuintuple]| evs.iter().map(|e| e.time).max();
    let min_time = |evs: &[EventQuintuple]| evs.iter().map(|e| e.time).min();
    let train_end = max_time(&parts[0]).map_or(0, |t| t + 1);
    if let Some(t) = min_time(&parts[1]) {
        if t < train_end {
            return Err(Error::validation(format!(
                "valid.txt has time {t} overlapping the training span 0..{train_end}"
            )));
        }
    }
    let valid_end = max_time(&parts[1]).map_or(train_end, |t| t + 1);
    if let Some(t) = min_time(&parts[2]) {
        if t < valid_end {
            return Err(Error::validation(format!(
                "test.txt has time {t} overlapping earlier splits ending at {valid_end}"
            )));
        }
    }
    let test_end = max_time(&parts[2]).map_or(valid_end, |t| t + 1);

    let mask_path = dir.join("masked_entities.txt");
    let mut masked_entities = BTreeSet::new();
    if mask_path.exists() {
        for (i, line) in read_text(&mask_path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let id: usize = line.parse().map_err(|_| Error::Parse {
                file: "masked_entities.txt".into(),
                line: i + 1,
                message: format!("{line:?} is not an entity id"),
            })?;
            if id >= vocab.num_entities() {
                return Err(Error::validation(format!(
                    "masked_entities.txt: entity {id} out of range"
                )));
            }
            masked_entities.insert(id);
        }
    }

    let mut parts = parts.into_iter();
    let splits = DatasetSplits {
        train: SnapshotSequence::from_events(parts.next().unwrap_or_default(), 0, train_end)?,
        valid: SnapshotSequence::from_events(parts.next().unwrap_or_default(), train_end, valid_end - train_end)?,
        test: SnapshotSequence::from_events(parts.next().unwrap_or_default(), valid_end, test_end - valid_end)?,
        masked_entities,
    };
    Ok((vocab, splits))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn vocab_text(names: &[String]) -> String {
    let mut s = String::new();
    for (i, n) in names.iter().enumerate() {
        let _ = writeln!(s, "{n}\t{i}");
    }
    s
}

/// Formats events (original relations only) as quintuple lines.
pub fn quintuple_lines<'a>(events: impl IntoIterator<Item = &'a EventQuintuple>, num_relations: usize) -> String {
    let mut s = String::new();
    for e in events.into_iter().filter(|e| e.relation < num_relations) {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", e.subject, e.relation, e.object, e.time, e.context);
    }
    s
}

/// Writes a dataset directory readable by [`load_dataset`].
pub fn save_dataset(dir: impl AsRef<Path>, vocab: &Vocab, splits: &DatasetSplits) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("entity2id.txt"), &vocab_text(&vocab.entities))?;
    write_text(&dir.join("relation2id.txt"), &vocab_text(&vocab.relations))?;
    write_text(&dir.join("context2id.txt"), &vocab_text(&vocab.contexts))?;
    write_text(
        &dir.join("stat.txt"),
        &format!("{}\t{}\t{}\n", vocab.num_entities(), vocab.num_relations(), vocab.num_contexts()),
    )?;
    for (name, seq) in [("train.txt", &splits.train), ("valid.txt", &splits.valid), ("test.txt", &splits.test)] {
        write_text(&dir.join(name), &quintuple_lines(seq.events(), vocab.num_relations()))?;
    }
    let mask_path = dir.join("masked_entities.txt");
    if splits.masked_entities.is_empty() {
        if mask_path.exists() {
            fs::remove_file(&mask_path).map_err(|e| Error::io(&mask_path, e))?;
        }
    } else {
        let text: String = splits.masked_entities.iter().map(|id| format!("{id}\n")).collect();
        write_text(&mask_path, &text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ev(s: usize, r: usize, o: usize, t: usize, c: usize) -> EventQuintuple {
        EventQuintuple::new(s, r, o, t, c)
    }

    #[test]
    fn inverse_events() {
        assert_eq!(
            add_inverse_events(&[ev(0, 0, 1, 5, 2)], 3).unwrap(),
            vec![ev(0, 0, 1, 5, 2), ev(1, 3, 0, 5, 2)]
        );
        assert!(add_inverse_events(&[], 3).unwrap().is_empty());
        assert!(matches!(add_inverse_events(&[ev(0, 3, 1, 0, 0)], 3), Err(Error::Validation(_))));
    }

    #[test]
    fn double_inversion_restores_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = 4;
        let events: Vec<_> = (0..10)
            .map(|_| ev(rng.random_range(0..9), rng.random_range(0..r), rng.random_range(0..9), 0, 0))
            .collect();
        let once = add_inverse_events(&events, r).unwrap();
        let twice = add_inverse_events(&once, 2 * r).unwrap();
        assert_eq!(twice.len(), 40);
        // the second pass inverts the first-pass inverses back to (s, o)
        for (orig, back) in events.iter().zip(&twice[30..]) {
            assert_eq!((back.subject, back.object), (orig.subject, orig.object));
            assert_eq!(back.relation % r, orig.relation);
        }
        // brute force: the multiset of (s, o) pairs in twice equals 2x events + 2x swapped
        let mut pairs: Vec<_> = twice.iter().map(|e| (e.subject, e.object)).collect();
        let mut want: Vec<_> = events
            .iter()
            .flat_map(|e| [(e.subject, e.object), (e.object, e.subject)])
            .flat_map(|p| [p, p])
            .collect();
        pairs.sort();
        want.sort();
        assert_eq!(pairs, want);
    }

    #[test]
    fn partition_cases() {
        let snap = [ev(0, 0, 1, 4, 0), ev(1, 0, 2, 4, 1)];
        let p = partition_by_context(&snap, 2).unwrap();
        assert_eq!(p.sub_graphs, vec![vec![snap[0]], vec![snap[1]]]);

        let p = partition_by_context(&[ev(0, 0, 1, 0, 0), ev(2, 1, 1, 0, 0)], 3).unwrap();
        assert!(p.sub_graphs[1].is_empty() && p.sub_graphs[2].is_empty());

        assert!(matches!(partition_by_context(&snap, 1), Err(Error::Validation(_))));
    }

    #[test]
    fn windows() {
        let seq = SnapshotSequence::from_events((0..8).map(|t| ev(0, 0, 0, t, 0)), 0, 8).unwrap();
        let times = |w: Vec<&[EventQuintuple]>| w.iter().map(|s| s[0].time).collect::<Vec<_>>();
        assert_eq!(times(history_window(&seq, 6, 3).unwrap()), vec![4, 5, 6]);
        assert_eq!(times(history_window(&seq, 1, 7).unwrap()), vec![0, 1]);
        assert_eq!(times(history_window(&seq, 0, 1).unwrap()), vec![0]);
        assert!(history_window(&seq, 8, 2).is_err());
        assert!(history_window(&seq, 2, 0).is_err());
    }

    #[test]
    fn snapshots_are_sorted_and_may_be_empty() {
        let seq = SnapshotSequence::from_events([ev(3, 0, 1, 2, 0), ev(1, 1, 0, 2, 1), ev(1, 0, 4, 2, 0)], 0, 4)
            .unwrap();
        assert!(seq.snapshot(0).unwrap().is_empty());
        let s: Vec<_> = seq.snapshot(2).unwrap().iter().map(|e| e.subject).collect();
        assert_eq!(s, vec![1, 1, 3]);
        assert!(SnapshotSequence::from_events([ev(0, 0, 0, 9, 0)], 0, 4).is_err());
    }

    #[test]
    fn split_points_are_eight_one_one() {
        assert_eq!(split_points(200).unwrap(), (160, 180));
        assert_eq!(split_points(10).unwrap(), (8, 9));
        assert_eq!(split_points(3).unwrap(), (1, 2));
        assert!(split_points(2).is_err());
    }

    #[test]
    fn fingerprint_tracks_names() {
        let a = Vocab::numbered(3, 2, 2).unwrap();
        let b = Vocab::new(
            vec!["x".into(), "e1".into(), "e2".into()],
            vec!["r0".into(), "r1".into()],
            vec!["c0".into(), "c1".into()],
        )
        .unwrap();
        assert!(a.fingerprint().check(&a.fingerprint()).is_ok());
        assert!(matches!(a.fingerprint().check(&b.fingerprint()), Err(Error::Compatibility(_))));
        let k3 = Vocab::numbered(3, 2, 3).unwrap();
        assert!(matches!(a.fingerprint().check(&k3.fingerprint()), Err(Error::Compatibility(_))));
        assert_eq!(a.relation_name(3).as_deref(), Some("inverse:r1"));
    }
}
