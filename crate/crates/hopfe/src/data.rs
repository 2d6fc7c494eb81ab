//! Triple ingestion, the filtered-setting index, synthetic graph generation,
//! attribute-text ingestion, and relation category statistics.
//!
//! Triple files are UTF-8 `head\trelation\ttail` lines. Attribute files are
//! `entity\tkind\ttext` with kind in {label, alias, instance, description};
//! token vector files are `token v1 .. v_width`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{HopfeError, Result};

pub const ATTRIBUTE_KINDS: [&str; 4] = ["label", "alias", "instance", "description"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: usize,
    pub relation: usize,
    pub tail: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Immutable triple container with dense ids and contiguous split ranges
/// (train, then valid, then test).
#[derive(Clone, Debug)]
pub struct TripleStore {
    pub triples: Vec<Triple>,
    pub entity_names: Vec<String>,
    pub relation_names: Vec<String>,
    entity_ids: HashMap<String, usize>,
    relation_ids: HashMap<String, usize>,
    /// (train_end, valid_end); test runs to the end.
    bounds: (usize, usize),
}

/// Counters emitted by the loaders.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub duplicates_dropped: usize,
    pub unseen_test_entities: usize,
    pub oov_attributes: usize,
}

impl TripleStore {
    pub fn num_entities(&self) -> usize {
        self.entity_names.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_names.len()
    }

    pub fn entity_id(&self, name: &str) -> Result<usize> {
        self.entity_ids
            .get(name)
            .copied()
            .ok_or_else(|| HopfeError::UnknownEntity(name.to_string()))
    }

    pub fn relation_id(&self, name: &str) -> Result<usize> {
        self.relation_ids
            .get(name)
            .copied()
            .ok_or_else(|| HopfeError::UnknownRelation(name.to_string()))
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.triples[..self.bounds.0],
            Split::Valid => &self.triples[self.bounds.0..self.bounds.1],
            Split::Test => &self.triples[self.bounds.1..],
        }
    }

    fn from_parts(
        splits: [Vec<(String, String, String)>; 3],
        report: &mut LoadReport,
    ) -> Result<TripleStore> {
        let mut entity_names = Vec::new();
        let mut relation_names = Vec::new();
        let mut entity_ids = HashMap::new();
        let mut relation_ids = HashMap::new();
        let intern = |names: &mut Vec<String>, ids: &mut HashMap<String, usize>, s: &str| {
            *ids.entry(s.to_string()).or_insert_with(|| {
                names.push(s.to_string());
                names.len() - 1
            })
        };

        let mut triples = Vec::new();
        let mut bounds = (0, 0);
        let mut train_entities: HashSet<usize> = HashSet::new();
        for (si, split) in splits.into_iter().enumerate() {
            let mut seen = HashSet::new();
            for (h, r, t) in split {
                let triple = Triple {
                    head: intern(&mut entity_names, &mut entity_ids, &h),
                    relation: intern(&mut relation_names, &mut relation_ids, &r),
                    tail: intern(&mut entity_names, &mut entity_ids, &t),
                };
                if !seen.insert(triple) {
                    report.duplicates_dropped += 1;
                    continue;
                }
                if si == 0 {
                    train_entities.insert(triple.head);
                    train_entities.insert(triple.tail);
                } else if si == 2 {
                    for e in [triple.head, triple.tail] {
                        if !train_entities.contains(&e) {
                            report.unseen_test_entities += 1;
                        }
                    }
                }
                triples.push(triple);
            }
            match si {
                0 => bounds.0 = triples.len(),
                1 => bounds.1 = triples.len(),
                _ => {}
            }
        }
        if report.unseen_test_entities > 0 {
            log::warn!(
                "{} test-triple endpoints never appear in train",
                report.unseen_test_entities
            );
        }
        Ok(TripleStore {
            triples,
            entity_names,
            relation_names,
            entity_ids,
            relation_ids,
            bounds,
        })
    }
}

/// Builds a store from in-memory rows (name triples per split); duplicates
/// within a split are dropped and counted like in the file loader.
pub fn build_store(
    train: Vec<(String, String, String)>,
    valid: Vec<(String, String, String)>,
    test: Vec<(String, String, String)>,
) -> Result<(TripleStore, LoadReport)> {
    let mut report = LoadReport::default();
    let store = TripleStore::from_parts([train, valid, test], &mut report)?;
    Ok((store, report))
}

fn read_split(path: &Path) -> Result<Vec<(String, String, String)>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next(), cols.next()) {
            (Some(h), Some(r), Some(t), None) => {
                rows.push((h.to_string(), r.to_string(), t.to_string()))
            }
            _ => {
                return Err(HopfeError::ParseError {
                    file: path.display().to_string(),
                    line: i + 1,
                    msg: "expected exactly 3 tab-separated columns".into(),
                })
            }
        }
    }
    if rows.is_empty() {
        return Err(HopfeError::EmptySplit(path.display().to_string()));
    }
    Ok(rows)
}

/// Loads the three split files; dictionaries cover all splits, duplicates
/// within a split are dropped and counted.
pub fn load_triples(
    train: &Path,
    valid: &Path,
    test: &Path,
) -> Result<(TripleStore, LoadReport)> {
    let mut report = LoadReport::default();
    let parts = [read_split(train)?, read_split(valid)?, read_split(test)?];
    let store = TripleStore::from_parts(parts, &mut report)?;
    Ok((store, report))
}

/// Writes the split files plus `entity_ids.tsv` / `relation_ids.tsv`
/// (`id\tname` lines) into `dir`.
pub fn save_store(store: &TripleStore, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (split, name) in [
        (Split::Train, "train.txt"),
        (Split::Valid, "valid.txt"),
        (Split::Test, "test.txt"),
    ] {
        let mut out = String::new();
        for t in store.split(split) {
            writeln!(
                out,
                "{}\t{}\t{}",
                store.entity_names[t.head], store.relation_names[t.relation], store.entity_names[t.tail]
            )
            .expect("string write");
        }
        std::fs::write(dir.join(name), out)?;
    }
    for (names, file) in [
        (&store.entity_names, "entity_ids.tsv"),
        (&store.relation_names, "relation_ids.tsv"),
    ] {
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(file))?);
        for (id, name) in names.iter().enumerate() {
            writeln!(f, "{id}\t{name}")?;
        }
    }
    Ok(())
}

/// Membership index over all splits, for filtered ranking and negative
/// sampling.
#[derive(Clone, Debug)]
pub struct FilterIndex {
    all: HashSet<Triple>,
    tails_of: HashMap<(usize, usize), Vec<usize>>,
    heads_of: HashMap<(usize, usize), Vec<usize>>,
}

impl FilterIndex {
    pub fn build(store: &TripleStore) -> FilterIndex {
        let mut all = HashSet::new();
        let mut tails_of: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let mut heads_of: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for &t in &store.triples {
            if all.insert(t) {
                tails_of.entry((t.head, t.relation)).or_default().push(t.tail);
                heads_of.entry((t.relation, t.tail)).or_default().push(t.head);
            }
        }
        FilterIndex {
            all,
            tails_of,
            heads_of,
        }
    }

    pub fn contains(&self, t: Triple) -> bool {
        self.all.contains(&t)
    }

    pub fn tails(&self, head: usize, relation: usize) -> &[usize] {
        self.tails_of
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn heads(&self, relation: usize, tail: usize) -> &[usize] {
        self.heads_of
            .get(&(relation, tail))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.all.len()
    }

    pub fn is_empty(&self) -> bool {
        self.all.is_empty()
    }
}

/// Random graph with `round(n * avg_degree / 2)` distinct undirected pairs,
/// each emitted once as a directed triple with a uniform relation id, split
/// 90/5/5.
pub fn generate_er_graph(
    n: usize,
    avg_degree: f64,
    num_relations: usize,
    seed: u64,
) -> Result<TripleStore> {
    if n < 2 {
        return Err(HopfeError::InvalidConfig("need at least 2 entities".into()));
    }
    if !(avg_degree > 0.0 && avg_degree < n as f64) {
        return Err(HopfeError::InvalidConfig(
            "avg_degree must lie in (0, n)".into(),
        ));
    }
    if num_relations < 1 {
        return Err(HopfeError::InvalidConfig("need at least 1 relation".into()));
    }
    let m = (n as f64 * avg_degree / 2.0).round() as usize;
    let max_pairs = n * (n - 1) / 2;
    if m > max_pairs {
        return Err(HopfeError::InvalidConfig(format!(
            "requested {m} edges exceeds the {max_pairs} distinct pairs"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: HashSet<(usize, usize)> = HashSet::with_capacity(m);
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if pairs.insert(key) {
            let r = rng.gen_range(0..num_relations);
            edges.push((a, b, r)); // sampled orientation kept
        }
    }

    edges.shuffle(&mut rng);
    let train_end = (m as f64 * 0.9).round() as usize;
    let valid_end = train_end + ((m - train_end) / 2).max(usize::from(m > train_end));
    let name = |i: usize| format!("e{i}");
    let to_rows = |es: &[(usize, usize, usize)]| {
        es.iter()
            .map(|&(a, b, r)| (name(a), format!("r{r}"), name(b)))
            .collect::<Vec<_>>()
    };
    let mut report = LoadReport::default();
    TripleStore::from_parts(
        [
            to_rows(&edges[..train_end]),
            to_rows(&edges[train_end..valid_end.min(m)]),
            to_rows(&edges[valid_end.min(m)..]),
        ],
        &mut report,
    )
}

// ---------------------------------------------------------------------------
// Attribute text
// ---------------------------------------------------------------------------

/// Per-entity aggregated attribute vectors, one optional vector per kind.
#[derive(Clone, Debug)]
pub struct AttributeTable {
    pub width: usize,
    /// entity name -> [vector per kind]; missing kinds are None.
    pub entries: HashMap<String, [Option<Vec<f64>>; 4]>,
}

fn kind_index(kind: &str) -> Option<usize> {
    ATTRIBUTE_KINDS.iter().position(|&k| k == kind)
}

/// Reads attribute texts and a token-vector file; each attribute becomes the
/// mean of its tokens' vectors (lowercase whitespace tokens). All-OOV text
/// yields a zero vector and bumps the report counter.
pub fn load_attributes(
    attributes: &Path,
    vectors: &Path,
    width: usize,
) -> Result<(AttributeTable, LoadReport)> {
    let mut vocab: HashMap<String, Vec<f64>> = HashMap::new();
    let reader = BufReader::new(std::fs::File::open(vectors)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| HopfeError::ParseError {
                file: vectors.display().to_string(),
                line: i + 1,
                msg: "missing token".into(),
            })?
            .to_string();
        let vals: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|e| HopfeError::ParseError {
                    file: vectors.display().to_string(),
                    line: i + 1,
                    msg: e.to_string(),
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != width {
            return Err(HopfeError::WidthMismatch {
                expected: width,
                got: vals.len(),
                line: i + 1,
            });
        }
        vocab.insert(token, vals);
    }

    let mut report = LoadReport::default();
    let mut entries: HashMap<String, [Option<Vec<f64>>; 4]> = HashMap::new();
    let reader = BufReader::new(std::fs::File::open(attributes)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.splitn(3, '\t');
        let (entity, kind, text) = match (cols.next(), cols.next(), cols.next()) {
            (Some(e), Some(k), Some(t)) => (e, k, t),
            _ => {
                return Err(HopfeError::ParseError {
                    file: attributes.display().to_string(),
                    line: i + 1,
                    msg: "expected entity\\tkind\\ttext".into(),
                })
            }
        };
        let ki = kind_index(kind).ok_or_else(|| HopfeError::ParseError {
            file: attributes.display().to_string(),
            line: i + 1,
            msg: format!("unknown attribute kind '{kind}'"),
        })?;
        let mut sum = vec![0.0f64; width];
        let mut found = 0usize;
        for token in text.to_lowercase().split_whitespace() {
            if let Some(v) = vocab.get(token) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                found += 1;
            }
        }
        if found > 0 {
            for s in sum.iter_mut() {
                *s /= found as f64;
            }
        } else {
            report.oov_attributes += 1;
        }
        entries.entry(entity.to_string()).or_default()[ki] = Some(sum);
    }
    Ok((AttributeTable { width, entries }, report))
}

/// Linear map from attribute vectors to fiber phases, one row per
/// (dimension, head). Trainable in principle; here it doubles as the phase
/// initializer.
#[derive(Clone, Debug)]
pub struct SemanticProjection {
    pub dim: usize,
    pub heads: usize,
    pub width: usize,
    /// dim * heads * width
    pub weights: Vec<f64>,
    /// dim * heads
    pub bias: Vec<f64>,
}

impl SemanticProjection {
    pub fn init(dim: usize, heads: usize, width: usize, seed: u64) -> SemanticProjection {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (1.0 / width.max(1) as f64).sqrt();
        SemanticProjection {
            dim,
            heads,
            width,
            weights: (0..dim * heads * width)
                .map(|_| rng.gen_range(-scale..scale))
                .collect(),
            bias: vec![0.0; dim * heads],
        }
    }
}

/// Phase initializer from attribute semantics:
/// `phase(e, d, h) = 2pi * sigmoid(w(d,h) . vector(e, kind h) + b(d,h))`.
/// Head h reads attribute kind h; missing kinds use zero vectors; entities
/// absent from the table return None (free phases).
pub fn attribute_phases(
    table: &AttributeTable,
    proj: &SemanticProjection,
    entity: &str,
) -> Result<Option<Vec<f64>>> {
    if proj.width != table.width {
        return Err(HopfeError::ShapeMismatch(format!(
            "projection width {} vs attribute width {}",
            proj.width, table.width
        )));
    }
    if proj.heads > ATTRIBUTE_KINDS.len() {
        return Err(HopfeError::ShapeMismatch(format!(
            "{} heads exceeds the {} attribute kinds",
            proj.heads,
            ATTRIBUTE_KINDS.len()
        )));
    }
    let kinds = match table.entries.get(entity) {
        Some(k) => k,
        None => return Ok(None),
    };
    let zero = vec![0.0f64; proj.width];
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut phases = Vec::with_capacity(proj.dim * proj.heads);
    for d in 0..proj.dim {
        for h in 0..proj.heads {
            let v = kinds[h].as_deref().unwrap_or(&zero);
            let row = &proj.weights[(d * proj.heads + h) * proj.width..][..proj.width];
            let z: f64 = row.iter().zip(v).map(|(w, x)| w * x).sum::<f64>()
                + proj.bias[d * proj.heads + h];
            let sig = 1.0 / (1.0 + (-z).exp());
            // sigmoid < 1, so the phase stays inside [0, 2pi)
            phases.push(two_pi * sig);
        }
    }
    Ok(Some(phases))
}

// ---------------------------------------------------------------------------
// Relation categories
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelationCategory {
    OneToOne,
    OneToMany,
    ManyToOne,
    ManyToMany,
}

impl RelationCategory {
    pub fn label(self) -> &'static str {
        match self {
            RelationCategory::OneToOne => "1-1",
            RelationCategory::OneToMany => "1-N",
            RelationCategory::ManyToOne => "N-1",
            RelationCategory::ManyToMany => "N-N",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CategoryStats {
    /// Per relation: (avg tails-per-head, avg heads-per-tail, category).
    pub per_relation: Vec<(f64, f64, RelationCategory)>,
    /// Fraction of train triples per category, in enum order.
    pub fractions: [f64; 4],
}

/// Averages tails-per-head and heads-per-tail over train triples; the 1.5
/// threshold splits the four categories.
pub fn relation_category_stats(store: &TripleStore) -> CategoryStats {
    let m = store.num_relations();
    let mut tails: Vec<HashMap<usize, usize>> = vec![HashMap::new(); m];
    let mut heads: Vec<HashMap<usize, usize>> = vec![HashMap::new(); m];
    let mut counts = vec![0usize; m];
    for t in store.split(Split::Train) {
        *tails[t.relation].entry(t.head).or_insert(0) += 1;
        *heads[t.relation].entry(t.tail).or_insert(0) += 1;
        counts[t.relation] += 1;
    }
    let mut per_relation = Vec::with_capacity(m);
    let mut weighted = [0usize; 4];
    for r in 0..m {
        let tph = if tails[r].is_empty() {
            0.0
        } else {
            counts[r] as f64 / tails[r].len() as f64
        };
        let hpt = if heads[r].is_empty() {
            0.0
        } else {
            counts[r] as f64 / heads[r].len() as f64
        };
        let cat = match (tph >= 1.5, hpt >= 1.5) {
            (false, false) => RelationCategory::OneToOne,
            (true, false) => RelationCategory::OneToMany,
            (false, true) => RelationCategory::ManyToOne,
            (true, true) => RelationCategory::ManyToMany,
        };
        per_relation.push((tph, hpt, cat));
        let ci = match cat {
            RelationCategory::OneToOne => 0,
            RelationCategory::OneToMany => 1,
            RelationCategory::ManyToOne => 2,
            RelationCategory::ManyToMany => 3,
        };
        weighted[ci] += counts[r];
    }
    let total: usize = counts.iter().sum();
    let fractions = if total == 0 {
        [0.0; 4]
    } else {
        weighted.map(|w| w as f64 / total as f64)
    };
    CategoryStats {
        per_relation,
        fractions,
    }
}
