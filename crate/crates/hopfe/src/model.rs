//! Parameter tables and the HopfE scoring function, including the
//! rotation-only (no-hopf) ablation variant.
//!
//! Per embedding dimension an entity is a 3-vector and H phases; a relation
//! is a quaternion (axis + angle of an SO(3) rotation) plus a phase offset
//! that shifts head phases along the fiber before the lift. Scoring rotates
//! the head, lifts both sides onto their fibers, and measures per-dimension
//! 4D distances; with H > 1 the H x H head-pair costs are combined by either
//! an entropic transport plan or the minimum entry.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{HopfeError, Result};
use crate::hopf::{fiber_point_unit, inverse_hopf_unit};
use crate::quat::{quat_distance, Quat, Quaternion, Vec3};
use crate::real::Real;
use crate::transport::{self, sinkhorn_plan_adaptive, TransportPlan};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Hopfe,
    NoHopf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Matching {
    Sinkhorn,
    Min,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding dimension k.
    pub dim: usize,
    /// Number of attribute heads H.
    pub heads: usize,
    pub variant: Variant,
    pub matching: Matching,
    /// Margin gamma of the loss.
    pub gamma: f64,
    /// Self-adversarial temperature alpha.
    pub alpha: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 100,
            heads: 1,
            variant: Variant::Hopfe,
            matching: Matching::Min,
            gamma: 12.0,
            alpha: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(HopfeError::InvalidConfig("dim must be >= 1".into()));
        }
        if self.heads < 1 {
            return Err(HopfeError::InvalidConfig("heads must be >= 1".into()));
        }
        if self.gamma <= 0.0 {
            return Err(HopfeError::InvalidConfig("gamma must be > 0".into()));
        }
        if self.alpha <= 0.0 {
            return Err(HopfeError::InvalidConfig("alpha must be > 0".into()));
        }
        Ok(())
    }
}

/// Dense parameter tables, all little-endian f64 in checkpoint order.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub num_entities: usize,
    pub num_relations: usize,
    pub dim: usize,
    pub heads: usize,
    /// n * k * 3
    pub entity_points: Vec<f64>,
    /// n * k * H, reduced mod 2pi on read
    pub entity_phases: Vec<f64>,
    /// m * k * 4
    pub relation_quats: Vec<f64>,
    /// m * k
    pub relation_offsets: Vec<f64>,
}

impl ModelParams {
    pub fn entity_point(&self, e: usize, d: usize) -> Vec3<f64> {
        let base = (e * self.dim + d) * 3;
        Vec3::new(
            self.entity_points[base],
            self.entity_points[base + 1],
            self.entity_points[base + 2],
        )
    }

    /// Phase of entity `e`, dimension `d`, head `h`, reduced mod 2pi.
    pub fn entity_phase(&self, e: usize, d: usize, h: usize) -> f64 {
        let raw = self.entity_phases[(e * self.dim + d) * self.heads + h];
        raw.rem_euclid(2.0 * std::f64::consts::PI)
    }

    pub fn relation_quat(&self, r: usize, d: usize) -> Quaternion {
        let base = (r * self.dim + d) * 4;
        Quat::new(
            self.relation_quats[base],
            self.relation_quats[base + 1],
            self.relation_quats[base + 2],
            self.relation_quats[base + 3],
        )
    }

    pub fn relation_offset(&self, r: usize, d: usize) -> f64 {
        self.relation_offsets[r * self.dim + d]
    }

    pub fn all_finite(&self) -> bool {
        self.entity_points.iter().all(|x| x.is_finite())
            && self.entity_phases.iter().all(|x| x.is_finite())
            && self.relation_quats.iter().all(|x| x.is_finite())
            && self.relation_offsets.iter().all(|x| x.is_finite())
    }
}

/// He-style initialization: entity coordinates and relation quaternion
/// components are zero-mean Gaussians with variance 2 / fan_in
/// (fan_in = 3k and 4k respectively); phases and offsets uniform [0, 2pi).
pub fn init_model(
    num_entities: usize,
    num_relations: usize,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<ModelParams> {
    cfg.validate()?;
    if num_entities < 1 || num_relations < 1 {
        return Err(HopfeError::InvalidConfig(
            "entity and relation counts must be >= 1".into(),
        ));
    }
    let k = cfg.dim;
    let h = cfg.heads;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let two_pi = 2.0 * std::f64::consts::PI;

    let entity_sd = (2.0 / (3 * k) as f64).sqrt();
    let relation_sd = (2.0 / (4 * k) as f64).sqrt();
    let entity_normal = Normal::new(0.0, entity_sd).expect("valid sd");
    let relation_normal = Normal::new(0.0, relation_sd).expect("valid sd");

    let entity_points = (0..num_entities * k * 3)
        .map(|_| entity_normal.sample(&mut rng))
        .collect();
    let entity_phases = (0..num_entities * k * h)
        .map(|_| rng.gen_range(0.0..two_pi))
        .collect();
    let relation_quats = (0..num_relations * k * 4)
        .map(|_| relation_normal.sample(&mut rng))
        .collect();
    let relation_offsets = (0..num_relations * k)
        .map(|_| rng.gen_range(0.0..two_pi))
        .collect();

    Ok(ModelParams {
        num_entities,
        num_relations,
        dim: k,
        heads: h,
        entity_points,
        entity_phases,
        relation_quats,
        relation_offsets,
    })
}

/// Borrowed view of one entity's parameters, generic over the scalar.
#[derive(Clone, Copy)]
pub struct EntityRef<'a, T> {
    /// k * 3
    pub points: &'a [T],
    /// k * H
    pub phases: &'a [T],
}

/// Borrowed view of one relation's parameters.
#[derive(Clone, Copy)]
pub struct RelationRef<'a, T> {
    /// k * 4
    pub quats: &'a [T],
    /// k
    pub offsets: &'a [T],
}

impl<'a, T: Real> EntityRef<'a, T> {
    pub fn point(&self, d: usize) -> Vec3<T> {
        Vec3::new(self.points[d * 3], self.points[d * 3 + 1], self.points[d * 3 + 2])
    }

    pub fn phase(&self, d: usize, heads: usize, h: usize) -> T {
        self.phases[d * heads + h]
    }
}

impl<'a, T: Real> RelationRef<'a, T> {
    pub fn quat(&self, d: usize) -> Quat<T> {
        Quat::new(
            self.quats[d * 4],
            self.quats[d * 4 + 1],
            self.quats[d * 4 + 2],
            self.quats[d * 4 + 3],
        )
    }
}

impl ModelParams {
    pub fn entity_ref(&self, e: usize) -> EntityRef<'_, f64> {
        EntityRef {
            points: &self.entity_points[e * self.dim * 3..(e + 1) * self.dim * 3],
            phases: &self.entity_phases[e * self.dim * self.heads..(e + 1) * self.dim * self.heads],
        }
    }

    pub fn relation_ref(&self, r: usize) -> RelationRef<'_, f64> {
        RelationRef {
            quats: &self.relation_quats[r * self.dim * 4..(r + 1) * self.dim * 4],
            offsets: &self.relation_offsets[r * self.dim..(r + 1) * self.dim],
        }
    }
}

/// Normalizes a raw 3-vector, lifts it to its fiber, and places it at `phase`.
pub fn lift<T: Real>(point: Vec3<T>, phase: T) -> Quat<T> {
    let unit = point.normalized_or_x();
    fiber_point_unit(inverse_hopf_unit(unit), phase)
}

/// Fiber points of one entity for a chosen head, one per dimension.
pub fn fibrate(params: &ModelParams, entity: usize, head: usize) -> Vec<Quaternion> {
    let e = params.entity_ref(entity);
    (0..params.dim)
        .map(|d| lift(e.point(d), e.phase(d, params.heads, head)))
        .collect()
}

/// H x H head-pair distance matrix (1 x 1 for the no-hopf variant).
///
/// Forward term rotates the head by the relation and shifts its phase by the
/// relation offset; the reverse term rotates the tail by the conjugate and
/// shifts by the negated offset.
pub fn pair_costs<T: Real>(
    head: EntityRef<'_, T>,
    rel: RelationRef<'_, T>,
    tail: EntityRef<'_, T>,
    cfg: &ModelConfig,
) -> Result<Vec<T>> {
    let k = cfg.dim;
    let h = cfg.heads;

    if cfg.variant == Variant::NoHopf {
        let mut total: Option<T> = None;
        for d in 0..k {
            let rotated = rel.quat(d).rotate(head.point(d))?;
            let dist = rotated.sub(tail.point(d)).norm();
            total = Some(match total {
                None => dist,
                Some(t) => t + dist,
            });
        }
        return Ok(vec![total.expect("dim >= 1")]);
    }

    // Rotated raw vectors, shared across heads.
    let mut rotated_head = Vec::with_capacity(k);
    let mut rotated_tail = Vec::with_capacity(k);
    for d in 0..k {
        let q = rel.quat(d);
        rotated_head.push(q.rotate(head.point(d))?);
        rotated_tail.push(q.conjugate().rotate(tail.point(d))?);
    }

    // Fiber points per head: forward-rotated head, plain tail, reverse-rotated
    // tail, plain head.
    let mut fh = Vec::with_capacity(h * k);
    let mut at = Vec::with_capacity(h * k);
    let mut ft = Vec::with_capacity(h * k);
    let mut ah = Vec::with_capacity(h * k);
    for hi in 0..h {
        for d in 0..k {
            let offset = rel.offsets[d];
            fh.push(lift(rotated_head[d], head.phase(d, h, hi) + offset));
            at.push(lift(tail.point(d), tail.phase(d, h, hi)));
            ft.push(lift(rotated_tail[d], tail.phase(d, h, hi) - offset));
            ah.push(lift(head.point(d), head.phase(d, h, hi)));
        }
    }

    let mut costs = Vec::with_capacity(h * h);
    for i in 0..h {
        for j in 0..h {
            let mut acc: Option<T> = None;
            for d in 0..k {
                let fwd = quat_distance(fh[i * k + d], at[j * k + d]);
                let rev = quat_distance(ft[j * k + d], ah[i * k + d]);
                let term = (fwd + rev) * 0.5;
                acc = Some(match acc {
                    None => term,
                    Some(t) => t + term,
                });
            }
            costs.push(acc.expect("dim >= 1"));
        }
    }
    Ok(costs)
}

/// Matching frozen for gradient purposes: either the argmin index pair or a
/// full transport plan treated as a constant coupling.
#[derive(Clone, Debug)]
pub enum MatchChoice {
    Min(usize, usize),
    Plan(Vec<f64>),
}

/// Resolves the matching on concrete costs and returns the score plus the
/// frozen choice that reproduces it.
pub fn resolve_matching(costs: &[f64], cfg: &ModelConfig) -> Result<(f64, MatchChoice)> {
    let h = if cfg.variant == Variant::NoHopf { 1 } else { cfg.heads };
    debug_assert_eq!(costs.len(), h * h);
    match cfg.matching {
        Matching::Min => {
            let (i, j, v) = transport::min_match(costs, h);
            Ok((v, MatchChoice::Min(i, j)))
        }
        Matching::Sinkhorn => {
            let TransportPlan { weights, cost, .. } = sinkhorn_plan_adaptive(
                costs,
                h,
                transport::DEFAULT_EPSILON,
                transport::DEFAULT_MAX_ITERS,
            )?;
            Ok((cost, MatchChoice::Plan(weights)))
        }
    }
}

/// Applies a frozen matching to a (possibly symbolic) cost matrix.
pub fn apply_matching<T: Real>(costs: &[T], choice: &MatchChoice, h: usize) -> T {
    match choice {
        MatchChoice::Min(i, j) => costs[i * h + j],
        MatchChoice::Plan(weights) => {
            let mut acc = costs[0] * weights[0];
            for ij in 1..costs.len() {
                acc = acc + costs[ij] * weights[ij];
            }
            acc
        }
    }
}

/// Triple score: a distance, lower is more plausible.
pub fn score(params: &ModelParams, h: usize, r: usize, t: usize, cfg: &ModelConfig) -> Result<f64> {
    let costs = pair_costs(params.entity_ref(h), params.relation_ref(r), params.entity_ref(t), cfg)?;
    Ok(resolve_matching(&costs, cfg)?.0)
}

/// Grid-search witness that the rotation-only variant cannot separate the
/// pattern {(e1,r,e2), (e2,r,e3), (e1,r,e3)} positive with all reversals
/// negative: returns the minimum over the grid of
/// `max(positive score, margin - min negative score)` with margin 0.3.
///
/// The grid places e1 on a `res x res` sphere grid and sweeps `res` rotation
/// angles about a fixed axis (global rotations cancel out of all distances,
/// so fixing the axis loses no generality); e2 and e3 sit on the rotation
/// orbit, which satisfies the first two positives exactly. Any configuration
/// with all positives below v has every negative below 5v by the triangle
/// inequality, so the returned violation cannot approach zero.
pub fn no_hopf_infeasibility(res: usize) -> f64 {
    assert!(res >= 4);
    let margin = 0.3;
    let mut min_violation = f64::INFINITY;
    let pi = std::f64::consts::PI;
    for ia in 0..res {
        // Azimuth and polar angle of e1; poles included via the polar sweep.
        let az = 2.0 * pi * ia as f64 / res as f64;
        for ip in 0..res {
            let pol = pi * (ip as f64 + 0.5) / res as f64;
            let e1 = Vec3::new(pol.sin() * az.cos(), pol.sin() * az.sin(), pol.cos());
            for ir in 0..res {
                let theta = 2.0 * pi * ir as f64 / res as f64;
                let r = Quat::new((theta / 2.0).cos(), 0.0, 0.0, (theta / 2.0).sin());
                let e2 = r.rotate(e1).expect("unit quaternion");
                let e3 = r.rotate(e2).expect("unit quaternion");
                let r_e3 = r.rotate(e3).expect("unit quaternion");
                // Positives 1 and 2 are exact; positive 3 is |R(e1) - e3|.
                let pos3 = e2.sub(e3).norm();
                let neg1 = r_e3.sub(e2).norm(); // (e3, r, e2)
                let neg2 = e3.sub(e1).norm(); // (e2, r, e1): R(e2) = e3
                let neg3 = r_e3.sub(e1).norm(); // (e3, r, e1)
                let violation = pos3.max(margin - neg1.min(neg2).min(neg3));
                min_violation = min_violation.min(violation);
            }
        }
    }
    min_violation
}

// ---------------------------------------------------------------------------
// Checkpoint format: b"HOPFE1\n", one line of JSON header, then little-endian
// f64 tables in declaration order.
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8] = b"HOPFE1\n";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    k: usize,
    h: usize,
    num_entities: usize,
    num_relations: usize,
    variant: Variant,
}

pub fn save_checkpoint(params: &ModelParams, variant: Variant, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    let header = CheckpointHeader {
        k: params.dim,
        h: params.heads,
        num_entities: params.num_entities,
        num_relations: params.num_relations,
        variant,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for table in [
        &params.entity_points,
        &params.entity_phases,
        &params.relation_quats,
        &params.relation_offsets,
    ] {
        for &x in table.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, Variant)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 7];
    r.read_exact(&mut magic)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(HopfeError::ParseError {
            file: path.display().to_string(),
            line: 1,
            msg: "bad checkpoint magic".into(),
        });
    }
    let mut header_line = String::new();
    r.read_line(&mut header_line)?;
    let header: CheckpointHeader = serde_json::from_str(&header_line)?;

    let mut read_table = |len: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; len * 8];
        r.read_exact(&mut buf)?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let (n, m, k, h) = (header.num_entities, header.num_relations, header.k, header.h);
    let params = ModelParams {
        num_entities: n,
        num_relations: m,
        dim: k,
        heads: h,
        entity_points: read_table(n * k * 3)?,
        entity_phases: read_table(n * k * h)?,
        relation_quats: read_table(m * k * 4)?,
        relation_offsets: read_table(m * k)?,
    };
    Ok((params, header.variant))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hopf::hopf_map;
    use std::f64::consts::{FRAC_PI_3, PI};

    fn small_cfg(heads: usize, matching: Matching) -> ModelConfig {
        ModelConfig {
            dim: 3,
            heads,
            variant: Variant::Hopfe,
            matching,
            gamma: 12.0,
            alpha: 1.0,
        }
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = small_cfg(2, Matching::Min);
        let a = init_model(10, 3, &cfg, 42).unwrap();
        let b = init_model(10, 3, &cfg, 42).unwrap();
        assert_eq!(a.entity_points, b.entity_points);
        assert_eq!(a.entity_phases, b.entity_phases);
        assert_eq!(a.relation_quats, b.relation_quats);
        assert_eq!(a.relation_offsets, b.relation_offsets);
        let c = init_model(10, 3, &cfg, 43).unwrap();
        assert_ne!(a.entity_points, c.entity_points);
    }

    #[test]
    fn init_variance_matches_he_rule() {
        let cfg = ModelConfig {
            dim: 10,
            ..small_cfg(1, Matching::Min)
        };
        let params = init_model(100, 1, &cfg, 7).unwrap();
        let n = params.entity_points.len() as f64;
        let var: f64 = params.entity_points.iter().map(|x| x * x).sum::<f64>() / n;
        let expect = 2.0 / 30.0;
        assert!(
            (var - expect).abs() < 0.2 * expect,
            "variance {var} vs {expect}"
        );
    }

    #[test]
    fn phase_table_shape() {
        let cfg = ModelConfig {
            dim: 4,
            ..small_cfg(1, Matching::Min)
        };
        let params = init_model(5, 2, &cfg, 1).unwrap();
        assert_eq!(params.entity_phases.len(), 5 * 4 * 1);
    }

    #[test]
    fn fibrate_unit_example() {
        let cfg = ModelConfig {
            dim: 1,
            ..small_cfg(1, Matching::Min)
        };
        let mut params = init_model(1, 1, &cfg, 0).unwrap();
        params.entity_points = vec![2.0, 0.0, 0.0];
        params.entity_phases = vec![0.0];
        let q = fibrate(&params, 0, 0)[0];
        assert!(quat_distance(q, Quat::new(0.0, 1.0, 0.0, 0.0)) < 1e-12);
    }

    #[test]
    fn fibrate_phase_periodicity_and_round_trip() {
        let cfg = small_cfg(2, Matching::Min);
        let params = init_model(4, 2, &cfg, 3).unwrap();
        let mut shifted = params.clone();
        for p in shifted.entity_phases.iter_mut() {
            *p += 2.0 * PI;
        }
        for head in 0..2 {
            let a = fibrate(&params, 1, head);
            let b = fibrate(&shifted, 1, head);
            for (qa, qb) in a.iter().zip(&b) {
                assert!(quat_distance(*qa, *qb) < 1e-9);
            }
        }
        for d in 0..cfg.dim {
            let q = fibrate(&params, 2, 0)[d];
            let p = params.entity_point(2, d);
            let unit = p.scaled(1.0 / p.norm());
            assert!(hopf_map(q).unwrap().sub(unit).norm() < 1e-9);
        }
    }

    #[test]
    fn identical_entities_score_zero_under_identity_relation() {
        let cfg = small_cfg(1, Matching::Min);
        let mut params = init_model(2, 1, &cfg, 5).unwrap();
        // Make entity 1 a copy of entity 0 and the relation the identity.
        let (points, phases) = (
            params.entity_points[..cfg.dim * 3].to_vec(),
            params.entity_phases[..cfg.dim].to_vec(),
        );
        params.entity_points[cfg.dim * 3..].copy_from_slice(&points);
        params.entity_phases[cfg.dim..].copy_from_slice(&phases);
        for d in 0..cfg.dim {
            params.relation_quats[d * 4..d * 4 + 4].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
            params.relation_offsets[d] = 0.0;
        }
        let s = score(&params, 0, 0, 1, &cfg).unwrap();
        assert!(s < 1e-9, "score {s}");
    }

    #[test]
    fn single_head_sinkhorn_equals_min() {
        let cfg_min = small_cfg(1, Matching::Min);
        let cfg_sink = small_cfg(1, Matching::Sinkhorn);
        let params = init_model(6, 2, &cfg_min, 11).unwrap();
        for (h, r, t) in [(0, 0, 1), (2, 1, 3), (4, 0, 5)] {
            let a = score(&params, h, r, t, &cfg_min).unwrap();
            let b = score(&params, h, r, t, &cfg_sink).unwrap();
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn relation_scale_invariance() {
        for matching in [Matching::Min, Matching::Sinkhorn] {
            let cfg = small_cfg(2, matching);
            let params = init_model(4, 2, &cfg, 13).unwrap();
            let mut scaled = params.clone();
            for q in scaled.relation_quats.iter_mut() {
                *q *= 2.5;
            }
            for (h, r, t) in [(0, 0, 1), (2, 1, 3)] {
                let a = score(&params, h, r, t, &cfg).unwrap();
                let b = score(&scaled, h, r, t, &cfg).unwrap();
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn inverse_pair_symmetry() {
        for matching in [Matching::Min, Matching::Sinkhorn] {
            let cfg = small_cfg(2, matching);
            let params = init_model(4, 1, &cfg, 17).unwrap();
            let mut inv = params.clone();
            for d in 0..cfg.dim {
                let q = params.relation_quat(0, d).conjugate();
                inv.relation_quats[d * 4..d * 4 + 4].copy_from_slice(&[q.a, q.b, q.c, q.d]);
                inv.relation_offsets[d] = -params.relation_offset(0, d);
            }
            let fwd = score(&params, 0, 0, 1, &cfg).unwrap();
            let rev = score(&inv, 1, 0, 0, &cfg).unwrap();
            assert!((fwd - rev).abs() < 1e-7, "{fwd} vs {rev}");
        }
    }

    /// Three entities on one fiber with an arithmetic phase progression are
    /// separable by a pure phase-shift relation, while reversed pairs are not.
    #[test]
    fn phase_progression_separates_direction() {
        let delta = FRAC_PI_3;
        let theta = 0.7;
        let cfg = ModelConfig {
            dim: 1,
            ..small_cfg(1, Matching::Min)
        };
        let mut params = init_model(3, 2, &cfg, 0).unwrap();
        for e in 0..3 {
            params.entity_points[e * 3..e * 3 + 3].copy_from_slice(&[0.3, -0.5, 0.81]);
            params.entity_phases[e] = theta + e as f64 * delta;
        }
        // Relation 0: identity rotation, phase shift delta. Relation 1: 2*delta.
        for r in 0..2 {
            params.relation_quats[r * 4..r * 4 + 4].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
            params.relation_offsets[r] = (r + 1) as f64 * delta;
        }
        for (h, r, t) in [(0, 0, 1), (1, 0, 2), (0, 1, 2)] {
            let pos = score(&params, h, r, t, &cfg).unwrap();
            let neg = score(&params, t, r, h, &cfg).unwrap();
            assert!(pos < 1e-6, "positive ({h},{r},{t}) scored {pos}");
            assert!(neg > 0.1, "reversed ({t},{r},{h}) scored {neg}");
        }
    }

    /// Same pattern with a single relation: two heads let the entities carry
    /// overlapping phase sets {t1,t2}, {t2,t3}, {t3,t3}, so one phase shift
    /// satisfies all three positives while every reversal stays separated.
    #[test]
    fn two_heads_separate_single_relation_progression() {
        let delta = FRAC_PI_3;
        let t1 = 0.4;
        let (t2, t3) = (t1 + delta, t1 + 2.0 * delta);
        let cfg = ModelConfig {
            dim: 1,
            ..small_cfg(2, Matching::Min)
        };
        let mut params = init_model(3, 1, &cfg, 0).unwrap();
        for e in 0..3 {
            params.entity_points[e * 3..e * 3 + 3].copy_from_slice(&[0.3, -0.5, 0.81]);
        }
        params.entity_phases.copy_from_slice(&[t1, t2, t2, t3, t3, t3]);
        params.relation_quats[0..4].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
        params.relation_offsets[0] = delta;
        for (h, t) in [(0, 1), (1, 2), (0, 2)] {
            let pos = score(&params, h, 0, t, &cfg).unwrap();
            let neg = score(&params, t, 0, h, &cfg).unwrap();
            assert!(pos < 1e-6, "positive ({h},r,{t}) scored {pos}");
            assert!(neg > 0.1, "reversed ({t},r,{h}) scored {neg}");
        }
    }

    #[test]
    fn rotation_only_variant_cannot_separate_the_progression() {
        let violation = no_hopf_infeasibility(8);
        assert!(violation > 0.05, "min violation {violation}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = small_cfg(2, Matching::Min);
        let params = init_model(5, 2, &cfg, 23).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&params, Variant::Hopfe, &path).unwrap();
        let (loaded, variant) = load_checkpoint(&path).unwrap();
        assert_eq!(variant, Variant::Hopfe);
        assert_eq!(loaded.entity_points, params.entity_points);
        assert_eq!(loaded.entity_phases, params.entity_phases);
        assert_eq!(loaded.relation_quats, params.relation_quats);
        assert_eq!(loaded.relation_offsets, params.relation_offsets);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let cfg = ModelConfig {
            gamma: 0.0,
            ..ModelConfig::default()
        };
        assert!(matches!(
            init_model(2, 1, &cfg, 0),
            Err(HopfeError::InvalidConfig(_))
        ));
    }
}
