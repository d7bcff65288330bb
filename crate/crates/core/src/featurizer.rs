//! Pair featurization.
//!
//! Every attribute contributes five metrics, each in `[0, 1]`: token Jaccard,
//! normalized edit similarity, exact match, range-normalized numeric
//! difference (zero for non-numeric attributes) and a missing-value flag.
//! The raw metric vectors are the atoms of risk rules; their per-dimension
//! standardization is the representation used as the clustering space.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Corpus, PairId, Record};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    TokenJaccard,
    EditSimilarity,
    ExactMatch,
    NumericDifference,
    Missing,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::TokenJaccard,
        MetricKind::EditSimilarity,
        MetricKind::ExactMatch,
        MetricKind::NumericDifference,
        MetricKind::Missing,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            MetricKind::TokenJaccard => "jaccard",
            MetricKind::EditSimilarity => "edit",
            MetricKind::ExactMatch => "exact",
            MetricKind::NumericDifference => "numdiff",
            MetricKind::Missing => "missing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricDescriptor {
    pub attribute: usize,
    pub kind: MetricKind,
}

/// Lowercases and splits on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let ta: HashSet<String> = tokenize(a).into_iter().collect();
    let tb: HashSet<String> = tokenize(b).into_iter().collect();
    let union = ta.union(&tb).count();
    if union == 0 {
        return 0.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

fn normalized(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Metric layout and the numeric ranges detected on a corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricSchema {
    attribute_names: Vec<String>,
    descriptors: Vec<MetricDescriptor>,
    /// `Some((min, max))` for attributes treated as numeric.
    numeric_ranges: Vec<Option<(f64, f64)>>,
}

/// Share of non-missing values that must parse as numbers for an attribute to
/// be treated as numeric.
pub const NUMERIC_PARSE_SHARE: f64 = 0.9;

impl MetricSchema {
    /// Detects numeric attributes and their value ranges over both tables.
    pub fn for_corpus(corpus: &Corpus) -> Self {
        let n_a = corpus.n_attributes();
        let numeric_ranges = (0..n_a)
            .map(|k| {
                let values: Vec<&str> = corpus
                    .left_table()
                    .iter()
                    .chain(corpus.right_table())
                    .filter(|r| !r.is_missing(k))
                    .map(|r| r.attributes[k].trim())
                    .collect();
                let parsed: Vec<f64> = values.iter().filter_map(|v| v.parse().ok()).collect();
                if values.is_empty() || (parsed.len() as f64) < NUMERIC_PARSE_SHARE * values.len() as f64 {
                    return None;
                }
                let lo = parsed.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = parsed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Some((lo, hi))
            })
            .collect();
        Self::with_ranges(corpus.schema().to_vec(), numeric_ranges)
    }

    pub fn with_ranges(attribute_names: Vec<String>, numeric_ranges: Vec<Option<(f64, f64)>>) -> Self {
        let descriptors = (0..attribute_names.len())
            .flat_map(|attribute| {
                MetricKind::ALL
                    .iter()
                    .map(move |&kind| MetricDescriptor { attribute, kind })
            })
            .collect();
        MetricSchema {
            attribute_names,
            descriptors,
            numeric_ranges,
        }
    }

    pub fn descriptors(&self) -> &[MetricDescriptor] {
        &self.descriptors
    }

    pub fn dim(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_numeric(&self, attribute: usize) -> bool {
        self.numeric_ranges[attribute].is_some()
    }

    /// Human-readable name of metric dimension `dim`, e.g. `year.exact`.
    pub fn dimension_name(&self, dim: usize) -> String {
        let d = self.descriptors[dim];
        format!("{}.{}", self.attribute_names[d.attribute], d.kind.short_name())
    }

    /// Raw metric vector of a record pair, one value per descriptor.
    pub fn attribute_metrics(&self, left: &Record, right: &Record) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        for (k, range) in self.numeric_ranges.iter().enumerate() {
            let (a, b) = (&left.attributes[k], &right.attributes[k]);
            if left.is_missing(k) || right.is_missing(k) {
                out.extend_from_slice(&[0.0, 0.0, 0.0, 0.0, 1.0]);
                continue;
            }
            let (na, nb) = (normalized(a), normalized(b));
            let jaccard = token_jaccard(a, b);
            let edit = strsim::normalized_levenshtein(&na, &nb);
            let exact = if na == nb { 1.0 } else { 0.0 };
            let numeric = match (range, a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
                (Some((lo, hi)), Ok(x), Ok(y)) if hi > lo => ((x - y).abs() / (hi - lo)).min(1.0),
                (Some(_), Ok(_), Ok(_)) => 0.0,
                // An unparseable value in a numeric column counts as maximally different.
                (Some(_), _, _) => 1.0,
                (None, _, _) => 0.0,
            };
            out.extend_from_slice(&[jaccard, edit, exact, numeric, 0.0]);
        }
        out
    }

    /// Raw metric matrix for every pair of the corpus, row `i` = pair `i`.
    pub fn metric_matrix(&self, corpus: &Corpus) -> MetricMatrix {
        let rows: Vec<Vec<f64>> = corpus
            .pairs()
            .par_iter()
            .map(|p| {
                let (l, r) = corpus.records(p);
                self.attribute_metrics(l, r)
            })
            .collect();
        MetricMatrix::from_rows(self.dim(), rows)
    }
}

/// Dense row-major matrix, one row per pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl MetricMatrix {
    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>) -> Self {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            assert_eq!(r.len(), dim, "row dimension");
            data.extend(r);
        }
        MetricMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }
}

/// Per-dimension mean and standard deviation fitted over the whole corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(metrics: &MetricMatrix) -> Self {
        let n = metrics.len().max(1) as f64;
        let d = metrics.dim();
        let mut mean = vec![0.0; d];
        for row in metrics.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in metrics.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Standardizer { mean, std }
    }

    /// Standardized copy of a raw metric vector. Zero-variance dimensions map
    /// to 0.
    pub fn build_representation(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                actual: raw.len(),
            });
        }
        Ok(raw
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| if *s > 1e-12 { (v - m) / s } else { 0.0 })
            .collect())
    }

    pub fn transform(&self, metrics: &MetricMatrix) -> RepresentationMatrix {
        let rows = metrics
            .rows()
            .map(|r| self.build_representation(r).expect("dimension checked by fit"))
            .collect();
        RepresentationMatrix(MetricMatrix::from_rows(metrics.dim(), rows))
    }
}

/// Pair representations, row `i` belongs to `PairId(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationMatrix(pub MetricMatrix);

impl RepresentationMatrix {
    pub fn from_rows(dim: usize, rows: Vec<Vec<f64>>) -> Self {
        RepresentationMatrix(MetricMatrix::from_rows(dim, rows))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, id: PairId) -> &[f64] {
        self.0.row(id.0)
    }

    /// Writes `pair_id,x0,x1,...` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let header: Vec<String> = std::iter::once("pair_id".to_string())
            .chain((0..self.dim()).map(|d| format!("x{d}")))
            .collect();
        writeln!(out, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
        for (i, row) in self.0.rows().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{i},{}", cells.join(",")).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Euclidean distance between two representations.
pub fn pair_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(euclidean(a, b))
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Label;
    use proptest::prelude::*;

    fn rec(id: &str, attrs: &[&str]) -> Record {
        Record::new(id, attrs.iter().map(|s| s.to_string()).collect())
    }

    fn schema(numeric: &[Option<(f64, f64)>]) -> MetricSchema {
        MetricSchema::with_ranges(
            (0..numeric.len()).map(|k| format!("a{k}")).collect(),
            numeric.to_vec(),
        )
    }

    #[test]
    fn jaccard_of_overlapping_token_sets() {
        assert!((token_jaccard("abc def", "abc xyz") - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(token_jaccard("ABC, def", "def abc"), 1.0);
        assert_eq!(token_jaccard("", ""), 0.0);
    }

    #[test]
    fn identical_strings_match_fully() {
        let s = schema(&[None]);
        let m = s.attribute_metrics(&rec("l", &["Deep Matching"]), &rec("r", &["Deep Matching"]));
        assert_eq!(m, vec![1.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn year_mismatch_clears_exact_match() {
        let s = schema(&[Some((1990.0, 2010.0))]);
        let m = s.attribute_metrics(&rec("l", &["1999"]), &rec("r", &["2001"]));
        assert_eq!(m[2], 0.0);
        assert!((m[3] - 0.1).abs() < 1e-12);
        assert_eq!(m[4], 0.0);
    }

    #[test]
    fn missing_value_sets_flag_and_zeroes_metrics() {
        let s = schema(&[None, Some((0.0, 10.0))]);
        let m = s.attribute_metrics(&rec("l", &["x", ""]), &rec("r", &["x", "3"]));
        assert_eq!(&m[5..], &[0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn numeric_detection_needs_ninety_percent() {
        let left: Vec<Record> = (0..10)
            .map(|i| rec(&format!("l{i}"), &[if i == 0 { "n/a" } else { "2001" }, "text"]))
            .collect();
        let right: Vec<Record> = (0..10)
            .map(|i| rec(&format!("r{i}"), &[&(1990 + i).to_string(), if i < 9 { "x" } else { "7" }]))
            .collect();
        let pairs = vec![("l0".to_string(), "r0".to_string(), Label::Equivalent)];
        let corpus = Corpus::from_parts(vec!["year".into(), "t".into()], left, right, &pairs).unwrap();
        let s = MetricSchema::for_corpus(&corpus);
        assert!(s.is_numeric(0));
        assert!(!s.is_numeric(1));
        assert_eq!(s.dimension_name(3), "year.numdiff");
    }

    #[test]
    fn representation_dimension_is_attributes_times_metrics() {
        let s = schema(&[None, None, None, Some((0.0, 1.0))]);
        assert_eq!(s.dim(), 20);
        let rows = vec![
            s.attribute_metrics(&rec("a", &["x y", "p", "q", "0.5"]), &rec("b", &["x", "p", "", "0.2"])),
            s.attribute_metrics(&rec("a", &["x y", "p", "q", "0.5"]), &rec("b", &["x", "p", "", "0.2"])),
            s.attribute_metrics(&rec("c", &["u", "v", "w", "1"]), &rec("d", &["u", "k", "w", "0"])),
        ];
        let metrics = MetricMatrix::from_rows(20, rows);
        let st = Standardizer::fit(&metrics);
        let reps = st.transform(&metrics);
        assert_eq!(reps.dim(), 20);
        assert_eq!(reps.get(PairId(0)), reps.get(PairId(1)));
        // Attribute 0's missing flag is 0 on every row: constant dimension.
        assert_eq!(reps.get(PairId(2))[4], 0.0);
        assert!(reps.0.rows().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn standardization_rejects_wrong_dimension() {
        let metrics = MetricMatrix::from_rows(2, vec![vec![0.0, 1.0], vec![1.0, 1.0]]);
        let st = Standardizer::fit(&metrics);
        assert!(matches!(
            st.build_representation(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(pair_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(pair_distance(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
        assert!(pair_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn representation_csv_has_header_and_rows() {
        let reps = RepresentationMatrix::from_rows(2, vec![vec![0.5, -1.0], vec![2.0, 0.0]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reps.csv");
        reps.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "pair_id,x0,x1\n0,0.5,-1\n1,2,0\n");
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-100.0f64..100.0, 3)
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in vec3(), b in vec3(), c in vec3()) {
            let ab = pair_distance(&a, &b).unwrap();
            let ba = pair_distance(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab >= 0.0);
            let ac = pair_distance(&a, &c).unwrap();
            let cb = pair_distance(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-9);
        }

        #[test]
        fn metrics_stay_in_unit_interval(
            a in "[a-z0-9 ]{0,20}", b in "[a-z0-9 ]{0,20}",
            x in 0u32..100, y in 0u32..100,
        ) {
            let s = schema(&[None, Some((0.0, 50.0))]);
            let m = s.attribute_metrics(
                &rec("l", &[&a, &x.to_string()]),
                &rec("r", &[&b, &y.to_string()]),
            );
            prop_assert_eq!(m.len(), 10);
            prop_assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
