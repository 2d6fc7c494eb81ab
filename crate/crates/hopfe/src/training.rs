//! Self-adversarial margin loss, negative sampling, reverse-mode gradients,
//! Adam, and the training loop.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{FilterIndex, Split, Triple, TripleStore};
use crate::error::{HopfeError, Result};
use crate::eval::evaluate_split;
use crate::model::{
    apply_matching, init_model, pair_costs, resolve_matching, EntityRef, MatchChoice, ModelConfig,
    ModelParams, RelationRef, Variant,
};
use crate::real::{softplus, Real};
use crate::tape::Tape;

#[derive(Clone, Debug, Serialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub neg_samples: usize,
    pub learning_rate: f64,
    pub decay_rate: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Steps between validation logs (0 logs only at the end).
    pub valid_every: usize,
    /// Steps between finite-difference spot checks (0 = off).
    pub grad_check_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 512,
            neg_samples: 64,
            learning_rate: 0.1,
            decay_rate: 0.1,
            max_steps: 1000,
            seed: 0,
            valid_every: 200,
            grad_check_interval: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 || self.neg_samples < 1 || self.max_steps < 1 {
            return Err(HopfeError::InvalidConfig(
                "batch_size, neg_samples and max_steps must be >= 1".into(),
            ));
        }
        if self.learning_rate <= 0.0 || self.decay_rate <= 0.0 || self.decay_rate > 1.0 {
            return Err(HopfeError::InvalidConfig(
                "learning_rate must be > 0 and decay_rate in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Dense gradients mirroring the parameter tables.
#[derive(Clone, Debug)]
pub struct GradientBundle {
    pub entity_points: Vec<f64>,
    pub entity_phases: Vec<f64>,
    pub relation_quats: Vec<f64>,
    pub relation_offsets: Vec<f64>,
}

impl GradientBundle {
    pub fn zeros_like(params: &ModelParams) -> GradientBundle {
        GradientBundle {
            entity_points: vec![0.0; params.entity_points.len()],
            entity_phases: vec![0.0; params.entity_phases.len()],
            relation_quats: vec![0.0; params.relation_quats.len()],
            relation_offsets: vec![0.0; params.relation_offsets.len()],
        }
    }

    pub fn tables(&self) -> [&[f64]; 4] {
        [
            &self.entity_points,
            &self.entity_phases,
            &self.relation_quats,
            &self.relation_offsets,
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.tables()
            .iter()
            .flat_map(|t| t.iter())
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.tables().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Uniform head-or-tail corruption avoiding known-true triples; gives up and
/// accepts after 100 resamples (dense-graph guard).
pub fn sample_negatives(
    triple: Triple,
    num_entities: usize,
    filter: &FilterIndex,
    n_neg: usize,
    rng: &mut impl Rng,
) -> Vec<Triple> {
    let mut out = Vec::with_capacity(n_neg);
    for _ in 0..n_neg {
        let mut candidate = triple;
        for _attempt in 0..100 {
            let corrupt_head = rng.gen_bool(0.5);
            let e = rng.gen_range(0..num_entities);
            candidate = if corrupt_head {
                Triple { head: e, ..triple }
            } else {
                Triple { tail: e, ..triple }
            };
            if !filter.contains(candidate) {
                break;
            }
        }
        out.push(candidate);
    }
    out
}

/// Batch of (positive, negatives) pairs drawn from the train split.
pub fn sample_batch(
    store: &TripleStore,
    filter: &FilterIndex,
    batch_size: usize,
    n_neg: usize,
    rng: &mut impl Rng,
) -> Vec<(Triple, Vec<Triple>)> {
    let train = store.split(Split::Train);
    (0..batch_size)
        .map(|_| {
            let pos = train[rng.gen_range(0..train.len())];
            let negs = sample_negatives(pos, store.num_entities(), filter, n_neg, rng);
            (pos, negs)
        })
        .collect()
}

fn softmax_weights(neg_scores: &[f64], gamma: f64, alpha: f64) -> Vec<f64> {
    let logits: Vec<f64> = neg_scores.iter().map(|&d| alpha * (gamma - d)).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Matching decisions and adversarial weights captured on concrete scores.
/// The symbolic loss treats them as constants, which is exactly what the
/// finite-difference oracle differentiates.
#[derive(Clone, Debug)]
pub struct FrozenItem {
    pub pos_score: f64,
    pub pos_choice: MatchChoice,
    pub neg_scores: Vec<f64>,
    pub neg_choices: Vec<MatchChoice>,
    pub weights: Vec<f64>,
}

/// Scores the positive and its negatives and freezes matching plus
/// adversarial weights.
pub fn freeze_item(
    positive: Triple,
    negatives: &[Triple],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<FrozenItem> {
    let item_costs = |t: Triple| -> Result<Vec<f64>> {
        pair_costs(
            params.entity_ref(t.head),
            params.relation_ref(t.relation),
            params.entity_ref(t.tail),
            cfg,
        )
    };
    let (pos_score, pos_choice) = resolve_matching(&item_costs(positive)?, cfg)?;
    let mut neg_scores = Vec::with_capacity(negatives.len());
    let mut neg_choices = Vec::with_capacity(negatives.len());
    for &n in negatives {
        let (s, c) = resolve_matching(&item_costs(n)?, cfg)?;
        neg_scores.push(s);
        neg_choices.push(c);
    }
    let weights = if negatives.is_empty() {
        Vec::new()
    } else {
        softmax_weights(&neg_scores, cfg.gamma, cfg.alpha)
    };
    Ok(FrozenItem {
        pos_score,
        pos_choice,
        neg_scores,
        neg_choices,
        weights,
    })
}

fn loss_from_scores<T: Real>(pos: T, negs: &[T], weights: &[f64], gamma: f64) -> T {
    let mut l = softplus(pos - gamma);
    for (i, &d) in negs.iter().enumerate() {
        l = l + softplus(-(d - gamma)) * weights[i];
    }
    l
}

/// Self-adversarial loss
/// `softplus(D+ - gamma) + sum_i p_i softplus(gamma - D-_i)` with detached
/// weights `p = softmax(alpha (gamma - D-))`.
pub fn loss(
    positive: Triple,
    negatives: &[Triple],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<f64> {
    let f = freeze_item(positive, negatives, params, cfg)?;
    Ok(loss_from_scores(
        f.pos_score,
        &f.neg_scores,
        &f.weights,
        cfg.gamma,
    ))
}

/// The loss with matching and weights held at `frozen`; this is the function
/// whose exact gradient the tape produces.
pub fn frozen_loss(
    positive: Triple,
    negatives: &[Triple],
    frozen: &FrozenItem,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<f64> {
    let h = if cfg.variant == Variant::NoHopf { 1 } else { cfg.heads };
    let item = |t: Triple, choice: &MatchChoice| -> Result<f64> {
        let costs = pair_costs(
            params.entity_ref(t.head),
            params.relation_ref(t.relation),
            params.entity_ref(t.tail),
            cfg,
        )?;
        Ok(apply_matching(&costs, choice, h))
    };
    let pos = item(positive, &frozen.pos_choice)?;
    let negs: Vec<f64> = negatives
        .iter()
        .zip(&frozen.neg_choices)
        .map(|(&n, c)| item(n, c))
        .collect::<Result<_>>()?;
    Ok(loss_from_scores(pos, &negs, &frozen.weights, cfg.gamma))
}

/// Sparse per-item gradient: (flat index into the owning table, value).
struct SparseGrad {
    entity_points: Vec<(usize, f64)>,
    entity_phases: Vec<(usize, f64)>,
    relation_quats: Vec<(usize, f64)>,
    relation_offsets: Vec<(usize, f64)>,
}

fn item_gradient(
    positive: Triple,
    negatives: &[Triple],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<(f64, SparseGrad)> {
    let frozen = freeze_item(positive, negatives, params, cfg)?;
    let k = params.dim;
    let heads = params.heads;
    let h_match = if cfg.variant == Variant::NoHopf { 1 } else { heads };

    let mut entities: Vec<usize> = vec![positive.head, positive.tail];
    entities.extend(negatives.iter().flat_map(|n| [n.head, n.tail]));
    entities.sort_unstable();
    entities.dedup();
    let eslot = |e: usize| entities.binary_search(&e).expect("collected above");

    // Rough per-score tape size; generous to avoid reallocation.
    let per_score = 400 * k * h_match * h_match;
    let tape = Tape::with_capacity((negatives.len() + 1) * per_score);

    // Leaf variables per involved entity and for the one relation.
    let mut epoints = Vec::with_capacity(entities.len());
    let mut ephases = Vec::with_capacity(entities.len());
    for &e in &entities {
        epoints.push(
            (0..k * 3)
                .map(|i| tape.var(params.entity_points[e * k * 3 + i]))
                .collect::<Vec<_>>(),
        );
        ephases.push(
            (0..k * heads)
                .map(|i| tape.var(params.entity_phases[e * k * heads + i]))
                .collect::<Vec<_>>(),
        );
    }
    let r = positive.relation;
    let rquats: Vec<_> = (0..k * 4)
        .map(|i| tape.var(params.relation_quats[r * k * 4 + i]))
        .collect();
    let roffsets: Vec<_> = (0..k)
        .map(|i| tape.var(params.relation_offsets[r * k + i]))
        .collect();
    let rel = RelationRef {
        quats: &rquats,
        offsets: &roffsets,
    };
    let entity_ref = |e: usize| EntityRef {
        points: epoints[eslot(e)].as_slice(),
        phases: ephases[eslot(e)].as_slice(),
    };

    let symbolic = |t: Triple, choice: &MatchChoice| -> Result<_> {
        let costs = pair_costs(entity_ref(t.head), rel, entity_ref(t.tail), cfg)?;
        Ok(apply_matching(&costs, choice, h_match))
    };
    let pos = symbolic(positive, &frozen.pos_choice)?;
    let negs = negatives
        .iter()
        .zip(&frozen.neg_choices)
        .map(|(&n, c)| symbolic(n, c))
        .collect::<Result<Vec<_>>>()?;
    let l = loss_from_scores(pos, &negs, &frozen.weights, cfg.gamma);
    let loss_val = l.value();
    if !loss_val.is_finite() {
        return Err(HopfeError::NonFiniteGradient);
    }
    let adj = tape.backward(l);

    let mut grad = SparseGrad {
        entity_points: Vec::new(),
        entity_phases: Vec::new(),
        relation_quats: Vec::new(),
        relation_offsets: Vec::new(),
    };
    for (slot, &e) in entities.iter().enumerate() {
        for (i, v) in epoints[slot].iter().enumerate() {
            let g = adj.get(*v);
            if g != 0.0 {
                grad.entity_points.push((e * k * 3 + i, g));
            }
        }
        for (i, v) in ephases[slot].iter().enumerate() {
            let g = adj.get(*v);
            if g != 0.0 {
                grad.entity_phases.push((e * k * heads + i, g));
            }
        }
    }
    for (i, v) in rquats.iter().enumerate() {
        let g = adj.get(*v);
        if g != 0.0 {
            grad.relation_quats.push((r * k * 4 + i, g));
        }
    }
    for (i, v) in roffsets.iter().enumerate() {
        let g = adj.get(*v);
        if g != 0.0 {
            grad.relation_offsets.push((r * k + i, g));
        }
    }
    let finite = grad
        .entity_points
        .iter()
        .chain(&grad.entity_phases)
        .chain(&grad.relation_quats)
        .chain(&grad.relation_offsets)
        .all(|(_, g)| g.is_finite());
    if !finite {
        return Err(HopfeError::NonFiniteGradient);
    }
    Ok((loss_val, grad))
}

/// Mean loss over the batch and its gradient with respect to every
/// parameter. Items run in parallel; accumulation order is fixed by batch
/// order, so results do not depend on the thread count.
pub fn gradients(
    batch: &[(Triple, Vec<Triple>)],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<(f64, GradientBundle)> {
    assert!(!batch.is_empty(), "empty batch");
    let items: Vec<(f64, SparseGrad)> = batch
        .par_iter()
        .map(|(pos, negs)| item_gradient(*pos, negs, params, cfg))
        .collect::<Result<_>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut bundle = GradientBundle::zeros_like(params);
    let mut total = 0.0;
    for (l, g) in &items {
        total += l;
        for &(i, v) in &g.entity_points {
            bundle.entity_points[i] += v * scale;
        }
        for &(i, v) in &g.entity_phases {
            bundle.entity_phases[i] += v * scale;
        }
        for &(i, v) in &g.relation_quats {
            bundle.relation_quats[i] += v * scale;
        }
        for &(i, v) in &g.relation_offsets {
            bundle.relation_offsets[i] += v * scale;
        }
    }
    if !bundle.all_finite() {
        return Err(HopfeError::NonFiniteGradient);
    }
    Ok((total * scale, bundle))
}

/// Central finite differences of the frozen-choice loss against the tape
/// gradient; returns the max relative error over coordinates with
/// |analytic| > `floor`.
pub fn finite_difference_check(
    batch: &[(Triple, Vec<Triple>)],
    params: &ModelParams,
    cfg: &ModelConfig,
    floor: f64,
) -> Result<f64> {
    let (_, analytic) = gradients(batch, params, cfg)?;
    let frozen: Vec<FrozenItem> = batch
        .iter()
        .map(|(p, n)| freeze_item(*p, n, params, cfg))
        .collect::<Result<_>>()?;
    let batch_frozen_loss = |p: &ModelParams| -> Result<f64> {
        let mut total = 0.0;
        for ((pos, negs), f) in batch.iter().zip(&frozen) {
            total += frozen_loss(*pos, negs, f, p, cfg)?;
        }
        Ok(total / batch.len() as f64)
    };

    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    let mut work = params.clone();
    let tables: [(fn(&mut ModelParams) -> &mut Vec<f64>, &[f64]); 4] = [
        (|p| &mut p.entity_points, &analytic.entity_points),
        (|p| &mut p.entity_phases, &analytic.entity_phases),
        (|p| &mut p.relation_quats, &analytic.relation_quats),
        (|p| &mut p.relation_offsets, &analytic.relation_offsets),
    ];
    for (get, grad) in tables {
        for i in 0..grad.len() {
            let g = grad[i];
            if g.abs() <= floor {
                continue;
            }
            let orig = get(&mut work)[i];
            get(&mut work)[i] = orig + h;
            let up = batch_frozen_loss(&work)?;
            get(&mut work)[i] = orig - h;
            let down = batch_frozen_loss(&work)?;
            get(&mut work)[i] = orig;
            let fd = (up - down) / (2.0 * h);
            max_rel = max_rel.max((fd - g).abs() / g.abs().max(fd.abs()));
        }
    }
    Ok(max_rel)
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

pub struct AdamState {
    pub step: usize,
    m: GradientBundle,
    v: GradientBundle,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(params: &ModelParams) -> AdamState {
        AdamState {
            step: 0,
            m: GradientBundle::zeros_like(params),
            v: GradientBundle::zeros_like(params),
        }
    }
}

/// `lr * decay^(s / max_steps)`: exactly one decade of decay over training
/// when decay = 0.1.
pub fn effective_lr(lr: f64, decay: f64, step: usize, max_steps: usize) -> f64 {
    lr * decay.powf(step as f64 / max_steps as f64)
}

pub fn adam_step(params: &mut ModelParams, grads: &GradientBundle, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - BETA1.powf(t);
    let bc2 = 1.0 - BETA2.powf(t);
    let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
        for i in 0..p.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    };
    update(
        &mut params.entity_points,
        &grads.entity_points,
        &mut state.m.entity_points,
        &mut state.v.entity_points,
    );
    update(
        &mut params.entity_phases,
        &grads.entity_phases,
        &mut state.m.entity_phases,
        &mut state.v.entity_phases,
    );
    update(
        &mut params.relation_quats,
        &grads.relation_quats,
        &mut state.m.relation_quats,
        &mut state.v.relation_quats,
    );
    update(
        &mut params.relation_offsets,
        &grads.relation_offsets,
        &mut state.m.relation_offsets,
        &mut state.v.relation_offsets,
    );
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub lr: f64,
}

/// Runs the loop and returns the trained parameters plus one log record per
/// validation event. Validation uses the valid split when nonempty, else the
/// train split. On a non-finite gradient the step is skipped and the
/// learning rate halved.
pub fn train(
    store: &TripleStore,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<(ModelParams, Vec<LogRecord>)> {
    let params = init_model(
        store.num_entities(),
        store.num_relations(),
        model_cfg,
        cfg.seed,
    )?;
    resume(store, cfg, model_cfg, params)
}

/// The training loop itself, starting from the given parameters (used for
/// semantic phase initialization).
pub fn resume(
    store: &TripleStore,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    mut params: ModelParams,
) -> Result<(ModelParams, Vec<LogRecord>)> {
    cfg.validate()?;
    model_cfg.validate()?;
    let filter = FilterIndex::build(store);
    let mut state = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut lr_scale = 1.0f64;
    let mut log = Vec::new();
    let eval_split = if store.split(Split::Valid).is_empty() {
        Split::Train
    } else {
        Split::Valid
    };

    let mut last_loss;
    for step in 1..=cfg.max_steps {
        let batch = sample_batch(store, &filter, cfg.batch_size, cfg.neg_samples, &mut rng);
        let lr = effective_lr(cfg.learning_rate, cfg.decay_rate, step, cfg.max_steps) * lr_scale;
        match gradients(&batch, &params, model_cfg) {
            Ok((l, grads)) => {
                last_loss = l;
                adam_step(&mut params, &grads, &mut state, lr);
            }
            Err(HopfeError::NonFiniteGradient) => {
                lr_scale *= 0.5;
                log::warn!("non-finite gradient at step {step}; lr scale now {lr_scale}");
                continue;
            }
            Err(e) => return Err(e),
        }
        if cfg.grad_check_interval > 0 && step % cfg.grad_check_interval == 0 {
            let spot = &batch[..1.min(batch.len())];
            let err = finite_difference_check(spot, &params, model_cfg, 1e-6)?;
            if err > 1e-4 {
                log::warn!("gradient check at step {step}: max relative error {err:.3e}");
            }
        }
        let log_now = (cfg.valid_every > 0 && step % cfg.valid_every == 0) || step == cfg.max_steps;
        if log_now {
            let report = evaluate_split(eval_split, &params, store, &filter, model_cfg)?;
            log.push(LogRecord {
                step,
                loss: last_loss,
                mrr: report.overall.mrr,
                hits1: report.overall.hits1,
                hits3: report.overall.hits3,
                hits10: report.overall.hits10,
                lr,
            });
        }
    }
    if !params.all_finite() {
        return Err(HopfeError::NonFiniteGradient);
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_store, generate_er_graph};
    use crate::model::Matching;

    fn cfg(k: usize, heads: usize, variant: Variant, matching: Matching) -> ModelConfig {
        ModelConfig {
            dim: k,
            heads,
            variant,
            matching,
            gamma: 12.0,
            alpha: 1.0,
        }
    }

    fn cycle_store(n: usize) -> TripleStore {
        let rows: Vec<(String, String, String)> = (0..n)
            .map(|i| (format!("e{i}"), "next".into(), format!("e{}", (i + 1) % n)))
            .collect();
        build_store(rows, Vec::new(), Vec::new()).unwrap().0
    }

    #[test]
    fn negatives_avoid_known_triples_and_are_deterministic() {
        let store = generate_er_graph(30, 4.0, 2, 41).unwrap();
        let filter = FilterIndex::build(&store);
        let t = store.split(Split::Train)[0];
        let mut rng1 = ChaCha8Rng::seed_from_u64(5);
        let negs1 = sample_negatives(t, store.num_entities(), &filter, 20, &mut rng1);
        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        let negs2 = sample_negatives(t, store.num_entities(), &filter, 20, &mut rng2);
        assert_eq!(negs1, negs2);
        for n in &negs1 {
            assert!(!filter.contains(*n));
            assert!(n.head == t.head || n.tail == t.tail);
        }
    }

    #[test]
    fn degenerate_graph_accepts_the_only_corruption() {
        let store = build_store(
            vec![("e0".into(), "r0".into(), "e1".into())],
            Vec::new(),
            Vec::new(),
        )
        .unwrap()
        .0;
        let filter = FilterIndex::build(&store);
        let t = store.split(Split::Train)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let negs = sample_negatives(t, 2, &filter, 10, &mut rng);
        assert_eq!(negs.len(), 10);
        // Corruptions can only be self-loops or the swap; none are in the KG.
        for n in &negs {
            assert!(!filter.contains(*n));
        }
    }

    #[test]
    fn loss_closed_forms() {
        let c = cfg(2, 1, Variant::Hopfe, Matching::Min);
        let store = cycle_store(4);
        let mut params = init_model(4, 1, &c, 1).unwrap();
        // Force D+ = 0: copy e1 onto e1 via identity relation scoring (e0 -> e0).
        for d in 0..c.dim {
            params.relation_quats[d * 4..d * 4 + 4].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
            params.relation_offsets[d] = 0.0;
        }
        let t = Triple {
            head: 0,
            relation: 0,
            tail: 0,
        };
        let l = loss(t, &[], &params, &c).unwrap();
        let expect = (1.0 + (-12.0f64).exp()).ln();
        assert!((l - expect).abs() < 1e-12, "{l} vs {expect}");
        assert!((expect - 6.1442e-6).abs() < 1e-9);
        drop(store);
    }

    #[test]
    fn negative_at_margin_adds_log_two() {
        // Synthetic check directly on the loss shape.
        let pos = 0.0;
        let negs = [12.0];
        let weights = [1.0];
        let l = loss_from_scores(pos, &negs, &weights, 12.0);
        let expect = (1.0 + (-12.0f64).exp()).ln() + 2.0f64.ln();
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn duplicate_negatives_match_single_copy() {
        let c = cfg(2, 2, Variant::Hopfe, Matching::Min);
        let params = init_model(5, 2, &c, 3).unwrap();
        let pos = Triple {
            head: 0,
            relation: 0,
            tail: 1,
        };
        let neg = Triple {
            head: 0,
            relation: 0,
            tail: 2,
        };
        let single = loss(pos, &[neg], &params, &c).unwrap();
        let doubled = loss(pos, &[neg, neg], &params, &c).unwrap();
        assert!((single - doubled).abs() < 1e-12);
    }

    #[test]
    fn adversarial_weights_sum_to_one_and_negative_terms_are_monotone() {
        let weights = softmax_weights(&[3.0, 7.0, 11.0, 2.0], 12.0, 0.5);
        assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Raising a negative's distance lowers both its softmax weight and
        // its softplus term, hence its contribution to the loss.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let gamma = 12.0;
            let alpha = if rng.gen_bool(0.5) { 0.5 } else { 1.0 };
            let mut negs: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..20.0)).collect();
            let i = rng.gen_range(0..negs.len());
            let w_before = softmax_weights(&negs, gamma, alpha);
            let term_before = w_before[i] * softplus(gamma - negs[i]);
            negs[i] += rng.gen_range(0.0..5.0);
            let w_after = softmax_weights(&negs, gamma, alpha);
            let term_after = w_after[i] * softplus(gamma - negs[i]);
            assert!(w_after[i] <= w_before[i] + 1e-12);
            assert!(term_after <= term_before + 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_all_modes() {
        let store = cycle_store(4);
        let filter = FilterIndex::build(&store);
        for variant in [Variant::Hopfe, Variant::NoHopf] {
            for matching in [Matching::Min, Matching::Sinkhorn] {
                let heads = if variant == Variant::NoHopf { 1 } else { 2 };
                let c = cfg(2, heads, variant, matching);
                let params = init_model(4, 2, &c, 7).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(9);
                let batch = sample_batch(&store, &filter, 2, 2, &mut rng);
                let err = finite_difference_check(&batch, &params, &c, 1e-6).unwrap();
                assert!(
                    err < 1e-4,
                    "{variant:?}/{matching:?}: max relative error {err:.3e}"
                );
            }
        }
    }

    #[test]
    fn untouched_parameters_have_zero_gradient() {
        let c = cfg(2, 1, Variant::Hopfe, Matching::Min);
        let params = init_model(6, 2, &c, 10).unwrap();
        let pos = Triple {
            head: 0,
            relation: 0,
            tail: 1,
        };
        let neg = Triple {
            head: 0,
            relation: 0,
            tail: 2,
        };
        let (_, grads) = gradients(&[(pos, vec![neg])], &params, &c).unwrap();
        // Entities 3..5 and relation 1 are untouched.
        for e in 3..6 {
            for i in 0..c.dim * 3 {
                assert_eq!(grads.entity_points[e * c.dim * 3 + i], 0.0);
            }
        }
        for i in 0..c.dim * 4 {
            assert_eq!(grads.relation_quats[c.dim * 4 + i], 0.0);
        }
    }

    #[test]
    fn saturated_losses_have_vanishing_gradient() {
        // k = 100, gamma = 100: D+ near 0 (near-identical entities) and
        // D- = 100 * sqrt(2) (antipodal fibers) leave both sigmoids flat.
        let k = 100;
        let c = ModelConfig {
            gamma: 100.0,
            ..cfg(k, 1, Variant::Hopfe, Matching::Min)
        };
        let mut params = init_model(3, 1, &c, 11).unwrap();
        for i in 0..k * 3 {
            let x = params.entity_points[i];
            params.entity_points[k * 3 + i] = x + 1e-3;
            params.entity_points[2 * k * 3 + i] = -x;
        }
        for i in 0..k {
            params.entity_phases[k + i] = params.entity_phases[i] + 1e-3;
            params.relation_quats[i * 4..i * 4 + 4].copy_from_slice(&[1.0, 0.0, 0.0, 0.0]);
            params.relation_offsets[i] = 0.0;
        }
        let pos = Triple {
            head: 0,
            relation: 0,
            tail: 1,
        };
        let neg = Triple {
            head: 0,
            relation: 0,
            tail: 2,
        };
        let f = freeze_item(pos, &[neg], &params, &c).unwrap();
        assert!(f.pos_score < 5.0, "D+ {}", f.pos_score);
        assert!(f.neg_scores[0] > 140.0, "D- {}", f.neg_scores[0]);
        let (_, grads) = gradients(&[(pos, vec![neg])], &params, &c).unwrap();
        assert!(grads.max_abs() < 1e-6, "max grad {}", grads.max_abs());
    }

    #[test]
    fn adam_first_step_magnitude_and_zero_grad() {
        let c = cfg(1, 1, Variant::Hopfe, Matching::Min);
        let mut params = init_model(1, 1, &c, 1).unwrap();
        let before = params.entity_points.clone();
        let mut grads = GradientBundle::zeros_like(&params);
        grads.entity_points[0] = 1.0;
        let mut state = AdamState::new(&params);
        adam_step(&mut params, &grads, &mut state, 0.1);
        let moved = before[0] - params.entity_points[0];
        assert!((moved - 0.1).abs() < 1e-6, "moved {moved}");
        // Zero gradient moves nothing further on fresh state.
        let mut params2 = params.clone();
        let zero = GradientBundle::zeros_like(&params2);
        let mut state2 = AdamState::new(&params2);
        adam_step(&mut params2, &zero, &mut state2, 0.1);
        assert_eq!(params2.entity_points, params.entity_points);
    }

    #[test]
    fn lr_schedule_endpoints() {
        let lr = 0.1;
        assert!((effective_lr(lr, 0.1, 0, 1000) - lr).abs() < 1e-15);
        assert!((effective_lr(lr, 0.1, 1000, 1000) - lr * 0.1).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let store = generate_er_graph(20, 4.0, 1, 51).unwrap();
        let c = cfg(3, 1, Variant::Hopfe, Matching::Min);
        let tc = TrainConfig {
            batch_size: 4,
            neg_samples: 2,
            max_steps: 20,
            valid_every: 10,
            seed: 3,
            ..TrainConfig::default()
        };
        let (p1, log1) = train(&store, &tc, &c).unwrap();
        let (p2, log2) = train(&store, &tc, &c).unwrap();
        assert_eq!(p1.entity_points, p2.entity_points);
        assert_eq!(p1.relation_quats, p2.relation_quats);
        assert_eq!(
            serde_json::to_string(&log1).unwrap(),
            serde_json::to_string(&log2).unwrap()
        );
    }

    #[test]
    fn first_step_loss_matches_independent_computation() {
        let store = generate_er_graph(20, 4.0, 1, 53).unwrap();
        let filter = FilterIndex::build(&store);
        let c = cfg(3, 1, Variant::Hopfe, Matching::Min);
        let tc = TrainConfig {
            batch_size: 3,
            neg_samples: 2,
            max_steps: 1,
            valid_every: 1,
            seed: 4,
            ..TrainConfig::default()
        };
        let (_, log) = train(&store, &tc, &c).unwrap();
        // Replicate the sampling stream: init params, then the first batch.
        let params = init_model(store.num_entities(), store.num_relations(), &c, tc.seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(1));
        let batch = sample_batch(&store, &filter, tc.batch_size, tc.neg_samples, &mut rng);
        let mut expect = 0.0;
        for (pos, negs) in &batch {
            expect += loss(*pos, negs, &params, &c).unwrap();
        }
        expect /= batch.len() as f64;
        assert!((log[0].loss - expect).abs() < 1e-12);
    }

    #[test]
    fn overfits_a_small_cycle() {
        let store = cycle_store(20);
        let c = cfg(10, 1, Variant::Hopfe, Matching::Min);
        let tc = TrainConfig {
            batch_size: 8,
            neg_samples: 4,
            max_steps: 700,
            valid_every: 0,
            seed: 12,
            ..TrainConfig::default()
        };
        let (_, log) = train(&store, &tc, &c).unwrap();
        let final_mrr = log.last().unwrap().mrr;
        assert!(final_mrr >= 0.9, "train MRR {final_mrr}");
    }
}
