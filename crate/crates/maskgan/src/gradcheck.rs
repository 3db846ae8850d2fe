//! Finite-difference verification of every graph op and of the composed
//! training losses, packaged for the `gradcheck` command.

use maskgan_core::corpus::TokenSeq;
use maskgan_core::masking::{apply_mask, Mask};
use maskgan_core::models::{Conditioning, FillMode, MaskGan, ModelConfig};
use maskgan_core::numerics::{grad_check, Graph, NodeId, ParamId, ParamStore, Tensor};
use maskgan_core::training::{
    critic_loss, discriminator_loss, generator_surrogate_loss, infill_loss, lm_loss, score_rollout, GanConfig, RewardScope,
};
use maskgan_core::{seeded_rng, Rng};
use rand::Rng as _;

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub name: String,
    pub max_error: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_error < TOLERANCE
    }
}

type Op = fn(&mut Graph, &[NodeId], &Shapes) -> maskgan_core::Result<NodeId>;

/// Random dimensions shared by one op check.
#[derive(Debug, Clone, Copy)]
struct Shapes {
    m: usize,
    k: usize,
    n: usize,
}

/// Entries bounded away from zero so `relu` is never probed at its kink.
fn random_values(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(0.05..2.0);
            if rng.gen_bool(0.5) {
                -x
            } else {
                x
            }
        })
        .collect()
}

fn op_check(name: &str, shapes: &[(usize, usize)], dims: Shapes, op: Op, rng: &mut Rng) -> maskgan_core::Result<GradCheck> {
    let mut store = ParamStore::new();
    let ids: Vec<ParamId> = shapes
        .iter()
        .enumerate()
        .map(|(i, &(r, c))| store.insert(&format!("p{i}"), Tensor::from_vec(&[r, c], random_values(r * c, rng))?))
        .collect::<maskgan_core::Result<_>>()?;
    let ids2 = ids.clone();
    let max_error = grad_check(&mut store, &ids, EPS, |s, g| {
        let nodes: Vec<NodeId> = ids2.iter().map(|&i| g.param(s, i)).collect();
        let out = op(g, &nodes, &dims)?;
        // Distinct weights give every output element its own upstream gradient.
        let (r, c) = g.dims(out);
        let w: Vec<f64> = (0..r * c).map(|i| 0.3 + 0.7 * ((i * 37 % 11) as f64 / 11.0) - 0.5).collect();
        let w = g.constant(r, c, w)?;
        let p = g.mul(out, w)?;
        Ok(g.sum(p))
    })?;
    Ok(GradCheck {
        name: name.into(),
        max_error,
    })
}

fn op_checks(rng: &mut Rng) -> maskgan_core::Result<Vec<GradCheck>> {
    let d = Shapes {
        m: rng.gen_range(1..=6),
        k: rng.gen_range(1..=6),
        n: rng.gen_range(2..=6),
    };
    let (m, k, n) = (d.m, d.k, d.n);
    let table: [(&str, Vec<(usize, usize)>, Op); 19] = [
        ("matmul", vec![(m, k), (k, n)], |g, x, _| g.matmul(x[0], x[1])),
        ("matmul_t", vec![(m, k), (n, k)], |g, x, _| g.matmul_t(x[0], x[1])),
        ("add", vec![(m, n), (m, n)], |g, x, _| g.add(x[0], x[1])),
        ("add_broadcast", vec![(m, n), (1, n)], |g, x, _| g.add(x[0], x[1])),
        ("sub_broadcast", vec![(m, n), (1, n)], |g, x, _| g.sub(x[0], x[1])),
        ("mul", vec![(m, n), (m, n)], |g, x, _| g.mul(x[0], x[1])),
        ("scale", vec![(m, n)], |g, x, _| Ok(g.scale(x[0], -1.7))),
        ("sigmoid", vec![(m, n)], |g, x, _| Ok(g.sigmoid(x[0]))),
        ("tanh", vec![(m, n)], |g, x, _| Ok(g.tanh(x[0]))),
        ("relu", vec![(m, n)], |g, x, _| Ok(g.relu(x[0]))),
        ("log", vec![(m, n)], |g, x, _| {
            let p = g.sigmoid(x[0]);
            Ok(g.log(p))
        }),
        ("log_sigmoid", vec![(m, n)], |g, x, _| Ok(g.log_sigmoid(x[0]))),
        ("softmax_rows", vec![(m, n)], |g, x, _| Ok(g.softmax_rows(x[0]))),
        ("log_softmax_rows", vec![(m, n)], |g, x, _| Ok(g.log_softmax_rows(x[0]))),
        ("concat_cols", vec![(m, k), (m, n)], |g, x, _| g.concat_cols(&[x[0], x[1]])),
        ("concat_rows", vec![(m, n), (k, n)], |g, x, _| g.concat_rows(&[x[0], x[1]])),
        ("slice_cols", vec![(m, n)], |g, x, d| g.slice_cols(x[0], 1, d.n - 1)),
        ("embedding", vec![(n, k)], |g, x, d| g.embedding(x[0], &[d.n - 1, 0, d.n - 1, 1 % d.n])),
        ("pick_add_all", vec![(m, n), (m, n)], |g, x, d| {
            let s = g.add_all(&[x[0], x[1], x[0]])?;
            g.pick(s, d.m - 1, d.n - 1)
        }),
    ];
    table.into_iter().map(|(name, shapes, op)| op_check(name, &shapes, d, op, rng)).collect()
}

fn model_checks(seed: u64) -> maskgan_core::Result<Vec<GradCheck>> {
    let cfg = ModelConfig {
        vocab_size: 7,
        embed_dim: 3,
        hidden_dim: 4,
        layers: 2,
        dropout: 0.0,
        share_embeddings: true,
        suppress_specials: true,
    };
    let mut m = MaskGan::new(cfg, seed)?;
    let x = TokenSeq::new(vec![4, 6, 5, 4, 6]);
    let ms = apply_mask(&x, &"10010".parse::<Mask>()?)?;
    let mut rollout = m
        .generator
        .generator_fill(&m.store, &ms, FillMode::Sample, Conditioning::Attention, &mut seeded_rng(seed))?;
    let gan = GanConfig {
        full_vocab_rewards: true,
        reward_scope: RewardScope::AllPositions,
        ..GanConfig::default()
    };
    score_rollout(&m, &mut rollout, &gan)?;
    let (gen, dis) = (m.generator.clone(), m.discriminator.clone());
    let (gp, dp, cp) = (m.generator_params(), m.discriminator_params(), m.critic_params());
    let with_store = |s: &ParamStore| MaskGan {
        store: s.clone(),
        ..m.clone()
    };
    let mut out = Vec::new();
    let mut push = |name: &str, r: maskgan_core::Result<f64>| -> maskgan_core::Result<()> {
        out.push(GradCheck {
            name: name.into(),
            max_error: r?,
        });
        Ok(())
    };
    let lm_err = grad_check(&mut m.store.clone(), &gp, EPS, |s, g| {
        lm_loss(g, &with_store(s), &x, 0.0, &mut seeded_rng(0))
    });
    push("lm_loss", lm_err)?;
    let infill_err = grad_check(&mut m.store.clone(), &gp, EPS, |s, g| {
        infill_loss(g, &with_store(s), &ms, 0.0, &mut seeded_rng(0)).map(|n| n.expect("positions are blanked"))
    });
    push("infill_loss", infill_err)?;
    push(
        "generator_surrogate_loss",
        grad_check(&mut m.store, &gp, EPS, |s, g| {
            Ok(generator_surrogate_loss(g, s, &gen, &rollout)?.expect("positions are blanked"))
        }),
    )?;
    push(
        "discriminator_loss",
        grad_check(&mut m.store, &dp, EPS, |s, g| {
            Ok(discriminator_loss(g, s, &dis, &rollout, 0.0, &mut seeded_rng(0))?.0)
        }),
    )?;
    push(
        "critic_loss",
        grad_check(&mut m.store, &cp, EPS, |s, g| {
            Ok(critic_loss(g, s, &dis, &rollout, RewardScope::AllPositions, 0.0, &mut seeded_rng(0))?
                .expect("positions are in scope")
                .0)
        }),
    )?;
    Ok(out)
}

/// Runs every check; the result lists the worst relative error per op and
/// per composed loss.
pub fn run_suite(seed: u64) -> maskgan_core::Result<Vec<GradCheck>> {
    let mut out = op_checks(&mut seeded_rng(seed))?;
    out.extend(model_checks(seed)?);
    Ok(out)
}
