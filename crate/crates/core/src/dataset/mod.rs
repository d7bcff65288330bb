//! Two-table ER corpora, stratified splits and the simulated labeling oracle.
//!
//! A corpus is read from three comma-separated files with header rows: the
//! left and right record tables (`id` followed by the attribute columns) and
//! the candidate pairs (`left_id,right_id,label`). Pair ids are the 0-based
//! row ordinals of the pairs file.

mod synth;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{generate_publications, PublicationsConfig};

/// Identifier of a candidate pair (row ordinal in the pairs file).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairId(pub usize);

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Inequivalent,
    Equivalent,
}

impl Label {
    pub fn from_bit(bit: u8) -> Option<Label> {
        match bit {
            0 => Some(Label::Inequivalent),
            1 => Some(Label::Equivalent),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Label::Inequivalent => 0,
            Label::Equivalent => 1,
        }
    }

    pub fn is_match(self) -> bool {
        self == Label::Equivalent
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Inequivalent => f.write_str("inequivalent"),
            Label::Equivalent => f.write_str("equivalent"),
        }
    }
}

/// One row of a record table. Empty attribute values are flagged as missing.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub attributes: Vec<String>,
    missing: Vec<bool>,
}

impl Record {
    pub fn new(id: impl Into<String>, attributes: Vec<String>) -> Self {
        let missing = attributes.iter().map(|a| a.trim().is_empty()).collect();
        Record {
            id: id.into(),
            attributes,
            missing,
        }
    }

    pub fn is_missing(&self, attribute: usize) -> bool {
        self.missing[attribute]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordPair {
    pub id: PairId,
    /// Index into the left table.
    pub left: usize,
    /// Index into the right table.
    pub right: usize,
    pub label: Label,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    schema: Vec<String>,
    left: Vec<Record>,
    right: Vec<Record>,
    pairs: Vec<RecordPair>,
}

impl Corpus {
    /// Builds a corpus from in-memory parts. `pairs` holds
    /// `(left_id, right_id, label)` triples; pair ids follow their order.
    pub fn from_parts(
        schema: Vec<String>,
        left: Vec<Record>,
        right: Vec<Record>,
        pairs: &[(String, String, Label)],
    ) -> Result<Self> {
        let left_index = index_table(&left, schema.len())?;
        let right_index = index_table(&right, schema.len())?;
        let pairs = pairs
            .iter()
            .enumerate()
            .map(|(row, (l, r, label))| {
                Ok(RecordPair {
                    id: PairId(row),
                    left: *left_index
                        .get(l.as_str())
                        .ok_or_else(|| Error::DanglingReference(l.clone()))?,
                    right: *right_index
                        .get(r.as_str())
                        .ok_or_else(|| Error::DanglingReference(r.clone()))?,
                    label: *label,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            schema,
            left,
            right,
            pairs,
        })
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn n_attributes(&self) -> usize {
        self.schema.len()
    }

    pub fn pairs(&self) -> &[RecordPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pair(&self, id: PairId) -> &RecordPair {
        &self.pairs[id.0]
    }

    pub fn records(&self, pair: &RecordPair) -> (&Record, &Record) {
        (&self.left[pair.left], &self.right[pair.right])
    }

    pub fn left_table(&self) -> &[Record] {
        &self.left
    }

    pub fn right_table(&self) -> &[Record] {
        &self.right
    }

    pub fn labels(&self) -> Vec<Label> {
        self.pairs.iter().map(|p| p.label).collect()
    }

    pub fn positive_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.label.is_match()).count()
    }

    /// Keeps at most `max_pairs` pairs, sampled per class so the positive
    /// rate is preserved. Pairs are renumbered in their original order.
    pub fn stratified_subsample(&self, max_pairs: usize, seed: u64) -> Corpus {
        if self.pairs.len() <= max_pairs {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut pos, mut neg): (Vec<usize>, Vec<usize>) =
            (0..self.pairs.len()).partition(|&i| self.pairs[i].label.is_match());
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        let keep_pos = ((max_pairs as f64) * pos.len() as f64 / self.pairs.len() as f64).round()
            as usize;
        let keep_pos = keep_pos.min(pos.len());
        let keep_neg = (max_pairs - keep_pos).min(neg.len());
        let mut kept: Vec<usize> = pos[..keep_pos]
            .iter()
            .chain(&neg[..keep_neg])
            .copied()
            .collect();
        kept.sort_unstable();
        let pairs = kept
            .iter()
            .enumerate()
            .map(|(row, &i)| RecordPair {
                id: PairId(row),
                ..self.pairs[i]
            })
            .collect();
        Corpus {
            schema: self.schema.clone(),
            left: self.left.clone(),
            right: self.right.clone(),
            pairs,
        }
    }

    /// Writes `left.csv`, `right.csv` and `pairs.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, table) in [("left.csv", &self.left), ("right.csv", &self.right)] {
            let path = dir.join(name);
            let mut w = csv::Writer::from_path(&path)?;
            let mut header = vec!["id".to_string()];
            header.extend(self.schema.iter().cloned());
            w.write_record(&header)?;
            for rec in table {
                let mut row = vec![rec.id.clone()];
                row.extend(rec.attributes.iter().cloned());
                w.write_record(&row)?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join("pairs.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["left_id", "right_id", "label"])?;
        for p in &self.pairs {
            w.write_record([
                self.left[p.left].id.as_str(),
                self.right[p.right].id.as_str(),
                &p.label.bit().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(())
    }
}

fn index_table(table: &[Record], n_attributes: usize) -> Result<HashMap<&str, usize>> {
    let mut index = HashMap::with_capacity(table.len());
    for (i, rec) in table.iter().enumerate() {
        if rec.attributes.len() != n_attributes {
            return Err(Error::DimensionMismatch {
                expected: n_attributes,
                actual: rec.attributes.len(),
            });
        }
        if index.insert(rec.id.as_str(), i).is_some() {
            return Err(Error::DuplicateRecord(rec.id.clone()));
        }
    }
    Ok(index)
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(file))
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Record>)> {
    let mut reader = open_csv(path)?;
    let header = reader.headers()?.clone();
    if header.is_empty() {
        return Err(malformed(path, 1, "missing header row"));
    }
    let schema: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != header.len() {
            return Err(malformed(
                path,
                line,
                format!("expected {} fields, found {}", header.len(), row.len()),
            ));
        }
        let id = row[0].trim();
        if id.is_empty() {
            return Err(malformed(path, line, "empty record id"));
        }
        records.push(Record::new(id, row.iter().skip(1).map(str::to_string).collect()));
    }
    Ok((schema, records))
}

/// Loads and validates a corpus from its three CSV files.
pub fn load_corpus(left_path: &Path, right_path: &Path, pairs_path: &Path) -> Result<Corpus> {
    let (schema, left) = read_table(left_path)?;
    let (right_schema, right) = read_table(right_path)?;
    if right_schema.len() != schema.len() {
        return Err(malformed(
            right_path,
            1,
            format!(
                "right table has {} attributes, left table has {}",
                right_schema.len(),
                schema.len()
            ),
        ));
    }

    let mut reader = open_csv(pairs_path)?;
    let header = reader.headers()?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| malformed(pairs_path, 1, format!("missing column \"{name}\"")))
    };
    let (li, ri, yi) = (column("left_id")?, column("right_id")?, column("label")?);
    let mut triples = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != header.len() {
            return Err(malformed(
                pairs_path,
                line,
                format!("expected {} fields, found {}", header.len(), row.len()),
            ));
        }
        let label = row[yi]
            .trim()
            .parse::<u8>()
            .ok()
            .and_then(Label::from_bit)
            .ok_or_else(|| malformed(pairs_path, line, format!("bad label \"{}\"", &row[yi])))?;
        triples.push((row[li].trim().to_string(), row[ri].trim().to_string(), label));
    }
    Corpus::from_parts(schema, left, right, &triples)
}

/// Which split a pair belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Labeled,
    Unlabeled,
    Validation,
    Test,
}

/// Sizes requested from [`make_partitions`].
#[derive(Debug, Clone, Copy)]
pub struct PartitionSpec {
    pub seed_size: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

/// The labeled / unlabeled / validation / test split of a corpus.
///
/// Ground truth for the unlabeled pool is only reachable through
/// [`PartitionState::oracle_label`].
#[derive(Debug, Clone)]
pub struct PartitionState {
    labeled: BTreeSet<PairId>,
    unlabeled: BTreeSet<PairId>,
    validation: BTreeSet<PairId>,
    test: BTreeSet<PairId>,
    truth: Arc<[Label]>,
}

impl PartialEq for PartitionState {
    fn eq(&self, other: &Self) -> bool {
        self.labeled == other.labeled
            && self.unlabeled == other.unlabeled
            && self.validation == other.validation
            && self.test == other.test
    }
}

/// Splits the corpus with class-stratified, seeded sampling.
///
/// Positives are apportioned across the four splits by largest remainder, so
/// each split's positive count is within one pair of proportional. The seed
/// set is forced to contain both classes when it can.
pub fn make_partitions(corpus: &Corpus, spec: PartitionSpec, rng_seed: u64) -> Result<PartitionState> {
    for f in [spec.val_fraction, spec.test_fraction] {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::Config(format!("split fraction {f} outside [0,1)")));
        }
    }
    let n = corpus.len();
    let n_val = (spec.val_fraction * n as f64).round() as usize;
    let n_test = (spec.test_fraction * n as f64).round() as usize;
    let requested = spec.seed_size + n_val + n_test;
    if requested > n {
        return Err(Error::InsufficientPairs {
            requested,
            available: n,
        });
    }
    // Order: test, validation, labeled, unlabeled.
    let sizes = [n_test, n_val, spec.seed_size, n - requested];
    let n_pos = corpus.positive_count();
    let mut pos_alloc = apportion(&sizes, n_pos, n);
    ensure_both_classes_in_seed(&sizes, &mut pos_alloc, n_pos, n);

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (mut pos, mut neg): (Vec<PairId>, Vec<PairId>) = corpus
        .pairs()
        .iter()
        .map(|p| p.id)
        .partition(|id| corpus.pair(*id).label.is_match());
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);

    let mut sets: [BTreeSet<PairId>; 4] = Default::default();
    let (mut pi, mut ni) = (0, 0);
    for (k, set) in sets.iter_mut().enumerate() {
        let take_pos = pos_alloc[k];
        let take_neg = sizes[k] - take_pos;
        set.extend(&pos[pi..pi + take_pos]);
        set.extend(&neg[ni..ni + take_neg]);
        pi += take_pos;
        ni += take_neg;
    }
    let [test, validation, labeled, unlabeled] = sets;
    Ok(PartitionState {
        labeled,
        unlabeled,
        validation,
        test,
        truth: corpus.labels().into(),
    })
}

/// Moves one positive into (or out of) the seed set when it would otherwise
/// be single-class. The counterpart split is the one whose allocation error
/// points the other way, which keeps every split within one pair of
/// proportional.
fn ensure_both_classes_in_seed(sizes: &[usize; 4], alloc: &mut [usize; 4], n_pos: usize, n: usize) {
    const SEED: usize = 2;
    if sizes[SEED] < 2 || n == 0 {
        return;
    }
    let error =
        |alloc: &[usize; 4], k: usize| alloc[k] as f64 - sizes[k] as f64 * n_pos as f64 / n as f64;
    if alloc[SEED] == 0 {
        let donor = (0..4)
            .filter(|&k| k != SEED && alloc[k] > 0)
            .max_by(|&a, &b| error(alloc, a).total_cmp(&error(alloc, b)).then(b.cmp(&a)));
        if let Some(k) = donor {
            alloc[k] -= 1;
            alloc[SEED] += 1;
        }
    } else if alloc[SEED] == sizes[SEED] {
        let receiver = (0..4)
            .filter(|&k| k != SEED && alloc[k] < sizes[k])
            .min_by(|&a, &b| error(alloc, a).total_cmp(&error(alloc, b)).then(a.cmp(&b)));
        if let Some(k) = receiver {
            alloc[k] += 1;
            alloc[SEED] -= 1;
        }
    }
}

/// Largest-remainder apportionment of `total_pos` positives over splits of
/// the given sizes.
fn apportion(sizes: &[usize; 4], total_pos: usize, n: usize) -> [usize; 4] {
    if n == 0 {
        return [0; 4];
    }
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| s as f64 * total_pos as f64 / n as f64)
        .collect();
    let mut alloc = [0usize; 4];
    for k in 0..4 {
        alloc[k] = (quotas[k].floor() as usize).min(sizes[k]);
    }
    let mut remaining = total_pos.saturating_sub(alloc.iter().sum());
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    while remaining > 0 {
        let mut progressed = false;
        for &k in &order {
            if remaining > 0 && alloc[k] < sizes[k] {
                alloc[k] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    alloc
}

impl PartitionState {
    pub fn labeled(&self) -> &BTreeSet<PairId> {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &BTreeSet<PairId> {
        &self.unlabeled
    }

    pub fn validation(&self) -> &BTreeSet<PairId> {
        &self.validation
    }

    pub fn test(&self) -> &BTreeSet<PairId> {
        &self.test
    }

    pub fn split_of(&self, id: PairId) -> Option<Split> {
        if self.labeled.contains(&id) {
            Some(Split::Labeled)
        } else if self.unlabeled.contains(&id) {
            Some(Split::Unlabeled)
        } else if self.validation.contains(&id) {
            Some(Split::Validation)
        } else if self.test.contains(&id) {
            Some(Split::Test)
        } else {
            None
        }
    }

    /// Simulated human oracle: reveals the ground truth of a pool pair.
    pub fn oracle_label(&self, id: PairId) -> Result<Label> {
        if !self.unlabeled.contains(&id) {
            return Err(Error::NotInPool(id));
        }
        Ok(self.truth[id.0])
    }

    /// Label of a pair whose label is already known to the learner
    /// (labeled, validation or test). `None` for pool pairs.
    pub fn known_label(&self, id: PairId) -> Option<Label> {
        match self.split_of(id)? {
            Split::Unlabeled => None,
            _ => Some(self.truth[id.0]),
        }
    }

    /// `(id, label)` for every labeled pair.
    pub fn labeled_examples(&self) -> Vec<(PairId, Label)> {
        self.labeled.iter().map(|&id| (id, self.truth[id.0])).collect()
    }

    pub fn validation_examples(&self) -> Vec<(PairId, Label)> {
        self.validation.iter().map(|&id| (id, self.truth[id.0])).collect()
    }

    pub fn test_examples(&self) -> Vec<(PairId, Label)> {
        self.test.iter().map(|&id| (id, self.truth[id.0])).collect()
    }

    /// Moves a labeled batch from the pool to the labeled set.
    pub fn apply_query(&self, query: &BTreeSet<PairId>) -> Result<PartitionState> {
        if let Some(&bad) = query.iter().find(|id| !self.unlabeled.contains(id)) {
            return Err(Error::NotInPool(bad));
        }
        let mut next = self.clone();
        for id in query {
            next.unlabeled.remove(id);
            next.labeled.insert(*id);
        }
        Ok(next)
    }

    /// Writes one JSON object per pair: `{"pair_id": .., "split": ..}`.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            pair_id: PairId,
            split: Split,
        }
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let mut rows: Vec<Row> = [
            (&self.labeled, Split::Labeled),
            (&self.unlabeled, Split::Unlabeled),
            (&self.validation, Split::Validation),
            (&self.test, Split::Test),
        ]
        .iter()
        .flat_map(|(set, split)| set.iter().map(move |&pair_id| Row { pair_id, split: *split }))
        .collect();
        rows.sort_by_key(|r| r.pair_id);
        for row in rows {
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}
