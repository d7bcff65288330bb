//! Seeded generator for a bibliographic two-table benchmark.
//!
//! The left table is a curated catalogue (full titles, author names, venue
//! names and years); the right table is a noisy crawl of the same papers
//! (typos, initials, abbreviated or missing venues, missing or shifted
//! years). Candidate pairs mimic a blocked workload: every crawled record is
//! paired with its true counterpart, with other versions of the same work
//! (journal extensions, workshop versions) and with topically similar papers.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use serde::{Deserialize, Serialize};

use super::{Corpus, Label, Record};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PublicationsConfig {
    /// Number of distinct works.
    pub works: usize,
    pub topics: usize,
    /// Probability that a work also has a second version (different year and
    /// venue, near-identical title and authors).
    pub version_rate: f64,
    /// Topical negatives attached to every crawled record.
    pub negatives_per_record: usize,
    /// Probability that a crawled record's year is missing.
    pub missing_year: f64,
    /// Probability that a crawled record's year is off by one.
    pub shifted_year: f64,
    pub missing_venue: f64,
    /// Per-character typo probability in crawled titles.
    pub typo_rate: f64,
    pub seed: u64,
}

impl Default for PublicationsConfig {
    fn default() -> Self {
        PublicationsConfig {
            works: 1500,
            topics: 12,
            version_rate: 0.35,
            negatives_per_record: 3,
            missing_year: 0.2,
            shifted_year: 0.12,
            missing_venue: 0.3,
            typo_rate: 0.03,
            seed: 2021,
        }
    }
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ra", "tu", "vi", "so", "de", "pa", "qui", "ber", "gan", "tor", "lin",
    "mar", "sel", "dor", "fen", "hal", "zu", "xe", "ion", "ant", "eri", "ost", "ula", "ped", "cor",
];

const COMMON: &[&str] = &[
    "a", "an", "the", "for", "of", "on", "in", "with", "towards", "using", "efficient", "scalable",
    "learning", "data", "model", "approach", "analysis", "framework", "method", "systems",
];

const FIRST_NAMES: &[&str] = &[
    "Alice", "Bruno", "Chen", "Dana", "Elif", "Farid", "Greta", "Hiro", "Ines", "Jonas", "Kofi",
    "Lena", "Marco", "Nadia", "Omar", "Priya", "Quentin", "Rosa", "Sven", "Tara", "Umut", "Vera",
    "Wei", "Xenia", "Yusuf", "Zoe",
];

struct Work {
    title: Vec<String>,
    authors: Vec<(String, String)>,
    venue: usize,
    year: u32,
}

struct Venue {
    full: String,
    short: String,
}

fn word(rng: &mut impl Rng, syllables: usize) -> String {
    (0..syllables)
        .map(|_| *SYLLABLES.choose(rng).unwrap())
        .collect()
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn typo(rng: &mut impl Rng, text: &str, rate: f64) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch.is_alphanumeric() && rng.random_bool(rate) {
            match rng.random_range(0..3) {
                0 => {}
                1 => {
                    out.push(ch);
                    out.push(ch);
                }
                _ => out.push(*b"eaoi".choose(rng).unwrap() as char),
            }
        } else {
            out.push(ch);
        }
    }
    out
}

/// Generates the benchmark described in the module docs.
pub fn generate_publications(cfg: &PublicationsConfig) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let topic_words: Vec<Vec<String>> = (0..cfg.topics)
        .map(|_| {
            (0..30)
                .map(|_| {
                    let len = 2 + rng.random_range(0..2);
                    word(&mut rng, len)
                })
                .collect()
        })
        .collect();
    let surnames: Vec<String> = (0..400).map(|_| capitalize(&word(&mut rng, 3))).collect();
    let venues: Vec<Venue> = (0..24)
        .map(|_| {
            let words: Vec<String> = (0..3).map(|_| capitalize(&word(&mut rng, 2))).collect();
            let short: String = words.iter().map(|w| &w[..1]).collect::<String>().to_uppercase();
            Venue {
                full: format!("Proceedings of the {} Conference", words.join(" ")),
                short,
            }
        })
        .collect();

    // Base works, then second versions that share most of the title and the
    // author list but not the year or venue.
    let mut works: Vec<(Work, usize)> = Vec::with_capacity(cfg.works * 2);
    for _ in 0..cfg.works {
        let topic = rng.random_range(0..cfg.topics);
        let len = rng.random_range(4..9);
        let mut title: Vec<String> = (0..len)
            .map(|_| {
                if rng.random_bool(0.65) {
                    topic_words[topic].choose(&mut rng).unwrap().clone()
                } else {
                    COMMON.choose(&mut rng).unwrap().to_string()
                }
            })
            .collect();
        title[0] = capitalize(&title[0]);
        let n_auth = rng.random_range(1..5);
        let authors = (0..n_auth)
            .map(|_| {
                (
                    FIRST_NAMES.choose(&mut rng).unwrap().to_string(),
                    surnames.choose(&mut rng).unwrap().clone(),
                )
            })
            .collect();
        let work = Work {
            title,
            authors,
            venue: rng.random_range(0..venues.len()),
            year: rng.random_range(1992..2016),
        };
        works.push((work, topic));
    }
    let base = works.len();
    let mut version_of: Vec<Option<usize>> = vec![None; base];
    for w in 0..base {
        if !rng.random_bool(cfg.version_rate) {
            continue;
        }
        let (orig, topic) = &works[w];
        let mut title = orig.title.clone();
        if rng.random_bool(0.6) {
            let extra = ["extended", "revisited", "a survey", "improved"].choose(&mut rng).unwrap();
            title.push(extra.to_string());
        }
        let mut authors = orig.authors.clone();
        if rng.random_bool(0.4) {
            authors.push((
                FIRST_NAMES.choose(&mut rng).unwrap().to_string(),
                surnames.choose(&mut rng).unwrap().clone(),
            ));
        }
        let year = orig.year + rng.random_range(1..4);
        let venue = (orig.venue + rng.random_range(1..venues.len())) % venues.len();
        let topic = *topic;
        works.push((
            Work {
                title,
                authors,
                venue,
                year,
            },
            topic,
        ));
        version_of.push(Some(w));
        version_of[w] = Some(works.len() - 1);
    }

    let schema = vec![
        "title".to_string(),
        "authors".to_string(),
        "venue".to_string(),
        "year".to_string(),
    ];

    let left: Vec<Record> = works
        .iter()
        .enumerate()
        .map(|(i, (w, _))| {
            let authors = w
                .authors
                .iter()
                .map(|(f, l)| format!("{f} {l}"))
                .collect::<Vec<_>>()
                .join(", ");
            let venue = if rng.random_bool(0.5) {
                venues[w.venue].full.clone()
            } else {
                venues[w.venue].short.clone()
            };
            Record::new(format!("L{i}"), vec![w.title.join(" "), authors, venue, w.year.to_string()])
        })
        .collect();

    let right: Vec<Record> = works
        .iter()
        .enumerate()
        .map(|(i, (w, _))| {
            let mut words = w.title.clone();
            if words.len() > 4 && rng.random_bool(0.25) {
                let drop = rng.random_range(1..words.len());
                words.remove(drop);
            }
            let title = typo(&mut rng, &words.join(" ").to_lowercase(), cfg.typo_rate);
            let mut authors: Vec<String> = w
                .authors
                .iter()
                .map(|(f, l)| format!("{} {}", &f[..1], l))
                .collect();
            if authors.len() > 2 && rng.random_bool(0.3) {
                authors.truncate(2);
                authors.push("et al".into());
            }
            let venue = if rng.random_bool(cfg.missing_venue) {
                String::new()
            } else if rng.random_bool(0.5) {
                venues[w.venue].short.clone()
            } else {
                typo(&mut rng, &venues[w.venue].full.to_lowercase(), cfg.typo_rate)
            };
            let year = if rng.random_bool(cfg.missing_year) {
                String::new()
            } else if rng.random_bool(cfg.shifted_year) {
                (w.year + 1).to_string()
            } else {
                w.year.to_string()
            };
            Record::new(format!("R{i}"), vec![title, authors.join(", "), venue, year])
        })
        .collect();

    let mut by_topic: Vec<Vec<usize>> = vec![Vec::new(); cfg.topics];
    for (i, (_, t)) in works.iter().enumerate() {
        by_topic[*t].push(i);
    }

    let mut pairs: Vec<(String, String, Label)> = Vec::new();
    for (r, (_, topic)) in works.iter().enumerate() {
        let mut candidates = vec![(r, Label::Equivalent)];
        if let Some(v) = version_of.get(r).copied().flatten() {
            candidates.push((v, Label::Inequivalent));
        }
        let pool = &by_topic[*topic];
        let mut tries = 0;
        while candidates.len() < cfg.negatives_per_record + 2 && tries < 50 {
            tries += 1;
            let l = *pool.choose(&mut rng).unwrap();
            if candidates.iter().any(|(c, _)| *c == l) || version_of[l] == Some(r) {
                continue;
            }
            candidates.push((l, Label::Inequivalent));
        }
        candidates.shuffle(&mut rng);
        for (l, label) in candidates {
            pairs.push((format!("L{l}"), format!("R{r}"), label));
        }
    }
    pairs.shuffle(&mut rng);

    Corpus::from_parts(schema, left, right, &pairs)
}
