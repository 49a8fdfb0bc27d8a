//! Central-difference gradient checks of every differentiable op and every
//! composite module, shared by the core tests and the acceptance target.
//! Each check runs over 5 seeds at relative tolerance 1e-4.

#![allow(dead_code)]

use planlink::nn::{
    edge_feature_dim, EdgeScorer, GatV2Layer, GraphStructure, HeadAggregation, Model, ModelConfig, PlanEncoder,
    PlanInput, Readout, SequenceInput, SlotSpec, ToMHead, TransformerBlock, NODE_FEATURE_DIM,
};
use planlink::plangraph::{Material, MaterialId, PartialPlan, PlanEdge};
use planlink::tensor::{grad_check, GradCheckOptions, Mode, ParamId, ParamStore, Tape, Tensor, Var};
use planlink::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEEDS: u64 = 5;
pub const TOLERANCE: f64 = 1e-4;

/// Outcome of one (check, seed).
#[derive(Clone, Debug)]
pub struct GradResult {
    pub name: String,
    pub seed: u64,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Reduces any output to a scalar with fixed random weights so every output
/// coordinate contributes to the gradient.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let w = tape.constant(random_tensor(&mut rng, &shape, 1.5));
    let prod = tape.mul(out, w)?;
    Ok(tape.sum_all(prod))
}

fn options(seed: u64, max_coords: usize) -> GradCheckOptions {
    GradCheckOptions {
        tol: TOLERANCE,
        seed,
        max_coords_per_param: max_coords,
        ..Default::default()
    }
}

type Build = dyn Fn(&mut Tape, &[Var]) -> Result<Var>;

fn check_op(out: &mut Vec<GradResult>, name: &str, shapes: &[&[usize]], build: &Build, positive: bool) {
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 7 + 1);
        let mut store = ParamStore::new();
        for (i, s) in shapes.iter().enumerate() {
            let mut t = random_tensor(&mut rng, s, 1.5);
            if positive {
                t = t.map(|x| x.abs() + 0.5);
            }
            store.add(format!("in{i}"), t);
        }
        let loss_of = |store: &ParamStore| -> Result<f64> {
            let mut tape = Tape::new(store, Mode::Train);
            let inputs: Vec<Var> = (0..shapes.len()).map(|i| tape.param(ParamId(i))).collect();
            let o = build(&mut tape, &inputs)?;
            let l = weighted_sum(&mut tape, o, seed)?;
            Ok(tape.value(l).item())
        };
        let mut tape = Tape::new(&store, Mode::Train);
        let inputs: Vec<Var> = (0..shapes.len()).map(|i| tape.param(ParamId(i))).collect();
        let o = build(&mut tape, &inputs).unwrap();
        let l = weighted_sum(&mut tape, o, seed).unwrap();
        let grads = tape.backward(l).unwrap().into_param_grads();
        let report = grad_check(&store, loss_of, &grads, &options(0, 64)).unwrap();
        out.push(GradResult {
            name: name.to_string(),
            seed,
            max_rel_error: report.max_rel_error,
            passed: report.passed,
        });
    }
}

/// Every differentiable tape op.
pub fn op_suite() -> Vec<GradResult> {
    let mut out = Vec::new();

    check_op(&mut out, "matmul", &[&[3, 4], &[4, 2]], &|t, v| t.matmul(v[0], v[1]), false);
    check_op(&mut out, "matmul_nt", &[&[3, 4], &[5, 4]], &|t, v| t.matmul_nt(v[0], v[1]), false);
    check_op(&mut out, "add", &[&[2, 3], &[2, 3]], &|t, v| t.add(v[0], v[1]), false);
    check_op(&mut out, "sub", &[&[2, 3], &[2, 3]], &|t, v| t.sub(v[0], v[1]), false);
    check_op(&mut out, "mul", &[&[2, 3], &[2, 3]], &|t, v| t.mul(v[0], v[1]), false);
    check_op(&mut out, "add_row", &[&[3, 4], &[4]], &|t, v| t.add_row(v[0], v[1]), false);
    check_op(&mut out, "mul_col", &[&[3, 4], &[3, 1]], &|t, v| t.mul_col(v[0], v[1]), false);
    check_op(&mut out, "scale", &[&[2, 2]], &|t, v| Ok(t.scale(v[0], -1.7)), false);
    check_op(&mut out, "concat0", &[&[2, 3], &[1, 3]], &|t, v| t.concat(&[v[0], v[1]], 0), false);
    check_op(&mut out, "concat1", &[&[2, 3], &[2, 1]], &|t, v| t.concat(&[v[0], v[1]], 1), false);
    check_op(&mut out, "slice0", &[&[4, 3]], &|t, v| t.slice(v[0], 0, 1, 3), false);
    check_op(&mut out, "slice1", &[&[4, 3]], &|t, v| t.slice(v[0], 1, 1, 3), false);
    check_op(&mut out, "transpose", &[&[2, 3]], &|t, v| t.transpose(v[0]), false);
    check_op(&mut out, "mean0", &[&[4, 3]], &|t, v| t.mean_over(v[0], 0), false);
    check_op(&mut out, "mean1", &[&[4, 3]], &|t, v| t.mean_over(v[0], 1), false);
    check_op(&mut out, "repeat_rows", &[&[1, 3]], &|t, v| t.repeat_rows(v[0], 4), false);
    check_op(&mut out, "softmax_rows", &[&[3, 5]], &|t, v| t.softmax_rows(v[0]), false);
    check_op(&mut out, "causal_softmax", &[&[4, 4]], &|t, v| t.causal_softmax(v[0]), false);
    check_op(&mut out, "causal_softmax_rect", &[&[2, 5]], &|t, v| t.causal_softmax(v[0]), false);
    check_op(&mut out, "prefix_softmax", &[&[3, 5]], &|t, v| t.prefix_softmax(v[0], &[2, 5, 1]), false);
    check_op(&mut out, 
        "segment_softmax",
        &[&[6, 1]],
        &|t, v| t.segment_softmax(v[0], &[0, 1, 0, 2, 1, 0]),
        false,
    );
    check_op(&mut out, "sigmoid", &[&[3, 3]], &|t, v| Ok(t.sigmoid(v[0])), false);
    check_op(&mut out, "tanh", &[&[3, 3]], &|t, v| Ok(t.tanh(v[0])), false);
    check_op(&mut out, "gelu", &[&[3, 3]], &|t, v| Ok(t.gelu(v[0])), false);
    check_op(&mut out, "leaky_relu", &[&[3, 3]], &|t, v| Ok(t.leaky_relu(v[0], 0.2)), false);
    check_op(&mut out, "gather_rows", &[&[4, 3]], &|t, v| t.gather_rows(v[0], &[2, 0, 2, 3]), false);
    check_op(&mut out, "embedding_lookup", &[&[5, 2]], &|t, v| t.embedding_lookup(v[0], &[4, 1]), false);
    check_op(&mut out, 
        "scatter_add_rows",
        &[&[4, 3]],
        &|t, v| t.scatter_add_rows(v[0], &[1, 0, 1, 2], 3),
        false,
    );
    check_op(&mut out, 
        "layer_norm",
        &[&[3, 5], &[5], &[5]],
        &|t, v| t.layer_norm(v[0], v[1], v[2], 1e-5),
        false,
    );
    check_op(&mut out, 
        "bce_with_logits",
        &[&[5, 1]],
        &|t, v| t.bce_with_logits(v[0], &[true, false, false, true, false]),
        false,
    );
    check_op(&mut out, 
        "cross_entropy",
        &[&[3, 4]],
        &|t, v| t.cross_entropy(v[0], &[0, 3, 1]),
        false,
    );
    check_op(&mut out, 
        "dropout_fixed_mask",
        &[&[4, 4]],
        &|t, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            t.dropout(v[0], 0.3, &mut rng)
        },
        false,
    );    out
}

/// Check of `build` (deterministic given the store: dropout masks come
/// from a fixed seed).
fn check_module(out: &mut Vec<GradResult>, name: &str, store: &ParamStore, seed: u64, build: &dyn Fn(&mut Tape) -> Result<Var>) {
    let loss_of = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(s, Mode::Train);
        let l = build(&mut tape)?;
        Ok(tape.value(l).item())
    };
    let mut tape = Tape::new(store, Mode::Train);
    let l = build(&mut tape).unwrap();
    let grads = tape.backward(l).unwrap().into_param_grads();
    let report = grad_check(store, loss_of, &grads, &options(seed, 24)).unwrap();
    out.push(GradResult {
        name: name.to_string(),
        seed,
        max_rel_error: report.max_rel_error,
        passed: report.passed,
    });
}

/// Goal 12 <- {10, 11}; 10 <- {0, 1}; 11 <- {2}.
fn toy_partial() -> PartialPlan {
    let mats: Vec<Material> = [12usize, 10, 11, 0, 1, 2]
        .iter()
        .map(|&id| Material {
            id: MaterialId(id),
            is_starting: id < 9,
        })
        .collect();
    let edges = [
        PlanEdge::new(12, 10, 0),
        PlanEdge::new(12, 11, 1),
        PlanEdge::new(10, 0, 2),
        PlanEdge::new(10, 1, 2),
        PlanEdge::new(11, 2, 3),
    ];
    PartialPlan::new(mats, MaterialId(12), edges.into_iter().collect(), 1).unwrap()
}

fn tiny_config(readout: Readout) -> ModelConfig {
    ModelConfig {
        plan_dim: 8,
        gat_heads: 2,
        model_dim: 8,
        attn_heads: 2,
        ff_dim: 12,
        embed_dim: 4,
        ..ModelConfig::new(4, vec![SlotSpec::new("move", 3), SlotSpec::new("feat", 2)], readout)
    }
}

/// GATv2 layer, plan encoder, transformer block, edge scorer with BCE,
/// ToM head with cross-entropy, and both full models.
pub fn module_suite() -> Vec<GradResult> {
    let mut out = Vec::new();
    for seed in 0..SEEDS {
        // GATv2 layer (node 3 has two in-edges).
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layer = GatV2Layer::new(&mut store, "g", 3, 2, 4, 2, HeadAggregation::Concat, &mut rng).unwrap();
        for v in store.get_mut(layer.bias).data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        let h = store.add("h", random_tensor(&mut rng, &[4, 3], 1.0));
        let f = store.add("f", random_tensor(&mut rng, &[4, 2], 1.0));
        let graph = GraphStructure::with_self_loops(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        check_module(&mut out, "gatv2_layer", &store, seed, &|tape| {
            let (hv, fv) = (tape.param(h), tape.param(f));
            let o = layer.forward(tape, hv, &graph, Some(fv))?;
            weighted_sum(tape, o.nodes, seed)
        });

        // Plan encoder through both layers and pooling.
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 10);
        let mut store = ParamStore::new();
        let enc = PlanEncoder::new(&mut store, "enc", NODE_FEATURE_DIM, edge_feature_dim(4), 8, 2, 0.1, &mut rng).unwrap();
        let input = PlanInput::from_partial(&toy_partial(), 4).unwrap();
        check_module(&mut out, "plan_encoder", &store, seed, &|tape| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let o = enc.forward(tape, &input, &mut r)?;
            let a = weighted_sum(tape, o.nodes, seed)?;
            let b = weighted_sum(tape, o.pooled, seed + 1)?;
            tape.add(a, b)
        });

        // Transformer block with dropout (fixed mask).
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 20);
        let mut store = ParamStore::new();
        let block = TransformerBlock::new(&mut store, "blk", 5, 8, 2, 12, 0.1, &mut rng).unwrap();
        let x = store.add("x", random_tensor(&mut rng, &[6, 5], 1.0));
        check_module(&mut out, "transformer_block", &store, seed, &|tape| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let xv = tape.param(x);
            let o = block.forward(tape, xv, &mut r)?;
            weighted_sum(tape, o, seed)
        });

        // Edge scorer + BCE, ToM head + cross-entropy.
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 30);
        let mut store = ParamStore::new();
        let scorer = EdgeScorer::new(&mut store, "s", 3, 4, &mut rng);
        let z = store.add("z", random_tensor(&mut rng, &[5, 3], 1.0));
        let c = store.add("c", random_tensor(&mut rng, &[1, 4], 1.0));
        check_module(&mut out, "edge_scorer+bce", &store, seed, &|tape| {
            let (zv, cv) = (tape.param(z), tape.param(c));
            let l = scorer.score(tape, zv, cv, &[(0, 1), (4, 2), (3, 3), (1, 0)])?;
            tape.bce_with_logits(l, &[true, false, false, true])
        });
        let mut store = ParamStore::new();
        let head = ToMHead::new(&mut store, "h", 4, 3, &mut rng);
        let x = store.add("x", random_tensor(&mut rng, &[3, 4], 1.0));
        check_module(&mut out, "tom_head+cross_entropy", &store, seed, &|tape| {
            let xv = tape.param(x);
            let l = head.forward(tape, xv)?;
            tape.cross_entropy(l, &[0, 2, 1])
        });

        // Full CPA and ToM models.
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 40);
        let input = SequenceInput {
            plan: PlanInput::from_partial(&toy_partial(), 4).unwrap(),
            len: 5,
            streams: vec![random_tensor(&mut rng, &[5, 3], 1.0), random_tensor(&mut rng, &[5, 2], 1.0)],
        };
        let cpa = Model::new(tiny_config(Readout::EdgeScore), seed).unwrap();
        check_module(&mut out, "cpa_model+bce", &cpa.store, seed, &|tape| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (_, l) = cpa.score_edges(tape, &input, &[(0, 3), (1, 2), (5, 4)], &mut r)?;
            tape.bce_with_logits(l, &[true, false, true])
        });
        let tom = Model::new(tiny_config(Readout::Classes(3)), seed).unwrap();
        check_module(&mut out, "tom_model+cross_entropy", &tom.store, seed, &|tape| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let (_, l) = tom.classify(tape, &input, &[1, 4], &mut r)?;
            tape.cross_entropy(l, &[2, 0])
        });
    }
    out
}
