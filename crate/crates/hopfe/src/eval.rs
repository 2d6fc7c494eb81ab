//! Filtered link-prediction ranking, metric reports, and rotation-angle
//! analysis of trained relations.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{FilterIndex, RelationCategory, Split, Triple, TripleStore};
use crate::error::{HopfeError, Result};
use crate::model::{lift, resolve_matching, ModelConfig, ModelParams, Variant};
use crate::quat::{quat_distance, wrap_angle, Quaternion, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Head,
    Tail,
}

/// Precomputed fiber points (or rotated raw points for the no-hopf variant)
/// so candidate sweeps avoid re-lifting every entity.
pub struct Scorer<'a> {
    params: &'a ModelParams,
    cfg: &'a ModelConfig,
    /// n * H * k plain fiber points (hopfe) or n * k raw points (no-hopf).
    plain: Vec<Quaternion>,
    plain_points: Vec<Vec3<f64>>,
    /// Per relation: forward-rotated and reverse-rotated tables.
    fwd: Vec<Vec<Quaternion>>,
    rev: Vec<Vec<Quaternion>>,
    rot_points: Vec<Vec<Vec3<f64>>>,
}

impl<'a> Scorer<'a> {
    pub fn new(params: &'a ModelParams, cfg: &'a ModelConfig) -> Result<Scorer<'a>> {
        let (n, m, k, h) = (
            params.num_entities,
            params.num_relations,
            params.dim,
            params.heads,
        );
        let mut scorer = Scorer {
            params,
            cfg,
            plain: Vec::new(),
            plain_points: Vec::new(),
            fwd: Vec::new(),
            rev: Vec::new(),
            rot_points: Vec::new(),
        };
        if cfg.variant == Variant::NoHopf {
            scorer.plain_points = (0..n)
                .flat_map(|e| (0..k).map(move |d| params.entity_point(e, d)))
                .collect();
            for r in 0..m {
                let mut rot = Vec::with_capacity(n * k);
                for e in 0..n {
                    for d in 0..k {
                        rot.push(params.relation_quat(r, d).rotate(params.entity_point(e, d))?);
                    }
                }
                scorer.rot_points.push(rot);
            }
            return Ok(scorer);
        }

        let mut plain = Vec::with_capacity(n * h * k);
        for e in 0..n {
            for hi in 0..h {
                for d in 0..k {
                    plain.push(lift(params.entity_point(e, d), params.entity_phase(e, d, hi)));
                }
            }
        }
        scorer.plain = plain;
        for r in 0..m {
            let mut fwd = Vec::with_capacity(n * h * k);
            let mut rev = Vec::with_capacity(n * h * k);
            for e in 0..n {
                for hi in 0..h {
                    for d in 0..k {
                        let q = params.relation_quat(r, d);
                        let off = params.relation_offset(r, d);
                        let p = params.entity_point(e, d);
                        let phase = params.entity_phase(e, d, hi);
                        fwd.push(lift(q.rotate(p)?, phase + off));
                        rev.push(lift(q.conjugate().rotate(p)?, phase - off));
                    }
                }
            }
            scorer.fwd.push(fwd);
            scorer.rev.push(rev);
        }
        Ok(scorer)
    }

    pub fn score(&self, head: usize, relation: usize, tail: usize) -> Result<f64> {
        let k = self.params.dim;
        if self.cfg.variant == Variant::NoHopf {
            let rot = &self.rot_points[relation][head * k..(head + 1) * k];
            let raw = &self.plain_points[tail * k..(tail + 1) * k];
            return Ok(rot
                .iter()
                .zip(raw)
                .map(|(a, b)| a.sub(*b).norm())
                .sum());
        }
        let h = self.params.heads;
        let stride = h * k;
        let fwd = &self.fwd[relation][head * stride..(head + 1) * stride];
        let rev = &self.rev[relation][tail * stride..(tail + 1) * stride];
        let ah = &self.plain[head * stride..(head + 1) * stride];
        let at = &self.plain[tail * stride..(tail + 1) * stride];
        let mut costs = Vec::with_capacity(h * h);
        for i in 0..h {
            for j in 0..h {
                let mut acc = 0.0;
                for d in 0..k {
                    acc += 0.5
                        * (quat_distance(fwd[i * k + d], at[j * k + d])
                            + quat_distance(rev[j * k + d], ah[i * k + d]));
                }
                costs.push(acc);
            }
        }
        Ok(resolve_matching(&costs, self.cfg)?.0)
    }
}

/// Filtered rank with average-of-ties: 1 + strictly better + ties / 2.
pub fn rank_query(
    scorer: &Scorer<'_>,
    triple: Triple,
    direction: Direction,
    filter: &FilterIndex,
) -> Result<f64> {
    let n = scorer.params.num_entities;
    if triple.head >= n || triple.tail >= n {
        return Err(HopfeError::UnknownEntity(format!(
            "entity id out of range (n = {n})"
        )));
    }
    let answer = match direction {
        Direction::Tail => triple.tail,
        Direction::Head => triple.head,
    };
    let target = match direction {
        Direction::Tail => scorer.score(triple.head, triple.relation, answer)?,
        Direction::Head => scorer.score(answer, triple.relation, triple.tail)?,
    };
    let mut better = 0usize;
    let mut ties = 0usize;
    for c in 0..n {
        if c == answer {
            continue;
        }
        let candidate = match direction {
            Direction::Tail => Triple { tail: c, ..triple },
            Direction::Head => Triple { head: c, ..triple },
        };
        if filter.contains(candidate) {
            continue;
        }
        let s = match direction {
            Direction::Tail => scorer.score(triple.head, triple.relation, c)?,
            Direction::Head => scorer.score(c, triple.relation, triple.tail)?,
        };
        if s < target {
            better += 1;
        } else if s == target {
            ties += 1;
        }
    }
    Ok(1.0 + better as f64 + ties as f64 / 2.0)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Metrics {
    pub mr: f64,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub query_count: usize,
}

impl Metrics {
    fn from_ranks(ranks: &[f64]) -> Metrics {
        let n = ranks.len() as f64;
        Metrics {
            mr: ranks.iter().sum::<f64>() / n,
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            hits1: ranks.iter().filter(|&&r| r <= 1.0).count() as f64 / n,
            hits3: ranks.iter().filter(|&&r| r <= 3.0).count() as f64 / n,
            hits10: ranks.iter().filter(|&&r| r <= 10.0).count() as f64 / n,
            query_count: ranks.len(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub overall: Metrics,
    pub per_relation: BTreeMap<String, Metrics>,
    pub per_category: BTreeMap<String, Metrics>,
}

/// Head- and tail-prediction queries over every triple of the split,
/// metrics over all 2 * |split| ranks, plus per-relation and per-category
/// breakdowns. Parallel over queries, deterministic reduction.
pub fn evaluate_split(
    split: Split,
    params: &ModelParams,
    store: &TripleStore,
    filter: &FilterIndex,
    cfg: &ModelConfig,
) -> Result<EvalReport> {
    let triples = store.split(split);
    if triples.is_empty() {
        return Err(HopfeError::EmptySplit(format!("{split:?}")));
    }
    let scorer = Scorer::new(params, cfg)?;
    let categories = crate::data::relation_category_stats(store);

    let ranks: Vec<(usize, f64, f64)> = triples
        .par_iter()
        .map(|&t| -> Result<(usize, f64, f64)> {
            let tail_rank = rank_query(&scorer, t, Direction::Tail, filter)?;
            let head_rank = rank_query(&scorer, t, Direction::Head, filter)?;
            Ok((t.relation, tail_rank, head_rank))
        })
        .collect::<Result<_>>()?;

    let all: Vec<f64> = ranks.iter().flat_map(|&(_, a, b)| [a, b]).collect();
    let mut by_relation: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut by_category: HashMap<RelationCategory, Vec<f64>> = HashMap::new();
    for &(r, a, b) in &ranks {
        by_relation.entry(r).or_default().extend([a, b]);
        let cat = categories.per_relation[r].2;
        by_category.entry(cat).or_default().extend([a, b]);
    }
    Ok(EvalReport {
        overall: Metrics::from_ranks(&all),
        per_relation: by_relation
            .into_iter()
            .map(|(r, ranks)| (store.relation_names[r].clone(), Metrics::from_ranks(&ranks)))
            .collect(),
        per_category: by_category
            .into_iter()
            .map(|(c, ranks)| (c.label().to_string(), Metrics::from_ranks(&ranks)))
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Angle analysis
// ---------------------------------------------------------------------------

/// Relation families whose per-dimension rotation angles should cancel.
#[derive(Clone, Debug)]
pub enum RelationSet {
    /// Angles of the two relations should sum to 0 per dimension.
    InversePair(String, String),
    /// Angle of r1 composed with r2 should match r3 per dimension.
    CompositionTriple(String, String, String),
}

#[derive(Clone, Debug, Serialize)]
pub struct Histogram {
    pub relation_set: String,
    /// "per_dim" pools all per-dimension values; "mean" is the single
    /// per-dimension average.
    pub dim_agg: String,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn build(relation_set: &str, dim_agg: &str, values: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
        let mut counts = vec![0usize; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let mut b = ((v - lo) / width).floor() as isize;
            b = b.clamp(0, bins as isize - 1);
            counts[b as usize] += 1;
        }
        let bin_edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        Histogram {
            relation_set: relation_set.to_string(),
            dim_agg: dim_agg.to_string(),
            bin_edges,
            counts,
        }
    }

    pub fn max_bin_fraction(&self) -> f64 {
        let total: usize = self.counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        *self.counts.iter().max().unwrap() as f64 / total as f64
    }

    /// Count falling in the bin whose interval contains `x`.
    pub fn mass_at(&self, x: f64) -> f64 {
        let total: usize = self.counts.iter().sum();
        if total == 0 {
            return 0.0;
        }
        for (i, &c) in self.counts.iter().enumerate() {
            if x >= self.bin_edges[i] && x < self.bin_edges[i + 1] {
                return c as f64 / total as f64;
            }
        }
        0.0
    }
}

fn angle_pair_values(params: &ModelParams, r1: usize, r2: usize) -> Result<Vec<f64>> {
    (0..params.dim)
        .map(|d| {
            let a = params.relation_quat(r1, d).signed_angle()?;
            let b = params.relation_quat(r2, d).signed_angle()?;
            Ok(wrap_angle(a + b))
        })
        .collect()
}

fn angle_composition_values(params: &ModelParams, r1: usize, r2: usize, r3: usize) -> Result<Vec<f64>> {
    (0..params.dim)
        .map(|d| {
            let composed = params
                .relation_quat(r1, d)
                .hamilton(params.relation_quat(r2, d))
                .signed_angle()?;
            let target = params.relation_quat(r3, d).signed_angle()?;
            Ok(wrap_angle(composed - target))
        })
        .collect()
}

/// Wrapped-angle histograms for each relation set, in both dimension
/// aggregations, plus a quaternion-norm histogram per involved relation.
pub fn angle_histograms(
    params: &ModelParams,
    store: &TripleStore,
    sets: &[RelationSet],
    bins: usize,
) -> Result<Vec<Histogram>> {
    assert!(bins >= 2);
    let pi = std::f64::consts::PI;
    let mut out = Vec::new();
    let mut involved: Vec<usize> = Vec::new();
    for set in sets {
        let (label, values) = match set {
            RelationSet::InversePair(a, b) => {
                let (ra, rb) = (store.relation_id(a)?, store.relation_id(b)?);
                involved.extend([ra, rb]);
                (format!("inverse:{a}+{b}"), angle_pair_values(params, ra, rb)?)
            }
            RelationSet::CompositionTriple(a, b, c) => {
                let (ra, rb, rc) = (
                    store.relation_id(a)?,
                    store.relation_id(b)?,
                    store.relation_id(c)?,
                );
                involved.extend([ra, rb, rc]);
                (
                    format!("composition:{a}*{b}-{c}"),
                    angle_composition_values(params, ra, rb, rc)?,
                )
            }
        };
        out.push(Histogram::build(&label, "per_dim", &values, -pi, pi, bins));
        let mean = wrap_angle(values.iter().sum::<f64>() / values.len() as f64);
        out.push(Histogram::build(&label, "mean", &[mean], -pi, pi, bins));
    }

    involved.sort_unstable();
    involved.dedup();
    for r in involved {
        let norms: Vec<f64> = (0..params.dim)
            .map(|d| params.relation_quat(r, d).norm())
            .collect();
        let hi = norms.iter().cloned().fold(0.0f64, f64::max) * 1.0001 + 1e-12;
        let label = format!("norm:{}", store.relation_names[r]);
        out.push(Histogram::build(&label, "per_dim", &norms, 0.0, hi, bins));
    }
    Ok(out)
}

/// CSV with header `relation_set,dim_agg,bin_left,bin_right,count`.
pub fn histograms_to_csv(histograms: &[Histogram]) -> String {
    let mut out = String::from("relation_set,dim_agg,bin_left,bin_right,count\n");
    for h in histograms {
        for (i, &c) in h.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                h.relation_set,
                h.dim_agg,
                h.bin_edges[i],
                h.bin_edges[i + 1],
                c
            ));
        }
    }
    out
}
