#[path = "support/grad_suite.rs"]
mod grad_suite;

use planlink::tensor::{
    grad_check, GradCheckOptions, Mode, ParamId, ParamStore, Tape, Tensor, Var,
};
use planlink::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}



#[test]
fn every_differentiable_op_passes_grad_check() {
    let results = grad_suite::op_suite();
    assert!(results.len() >= 5 * 30);
    for r in results {
        assert!(r.passed, "{} seed {}: rel error {}", r.name, r.seed, r.max_rel_error);
    }
}

#[test]
fn product_rule_and_unused_params() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::scalar(2.0));
    let y = store.add("y", Tensor::scalar(3.0));
    let unused = store.add("unused", Tensor::scalar(1.0));
    let mut tape = Tape::new(&store, Mode::Train);
    let xv = tape.param(x);
    let yv = tape.param(y);
    let _ = tape.param(unused);
    let prod = tape.mul(xv, yv).unwrap();
    let grads = tape.backward(prod).unwrap();
    assert_eq!(grads.param(x).unwrap().item(), 3.0);
    assert_eq!(grads.param(y).unwrap().item(), 2.0);
    assert_eq!(grads.param(unused).map_or(0.0, |g| g.item()), 0.0);
}

#[test]
fn fan_out_accumulates() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::scalar(1.5));
    let mut tape = Tape::new(&store, Mode::Train);
    let xv = tape.param(x);
    let sq = tape.mul(xv, xv).unwrap();
    let tot = tape.add(sq, xv).unwrap();
    let grads = tape.backward(tot).unwrap();
    assert!((grads.param(x).unwrap().item() - 4.0).abs() < 1e-15);
}

#[test]
fn non_scalar_loss_is_contract_error() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store, Mode::Train);
    let v = tape.constant(Tensor::vector(&[1.0, 2.0]));
    assert!(matches!(tape.backward(v), Err(planlink::Error::Contract(_))));
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store, Mode::Train);
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 4]));
    let msg = tape.add(a, b).unwrap_err().to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[2, 4]"), "{msg}");
}

#[test]
fn sigmoid_and_softmax_basics() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store, Mode::Eval);
    let z = tape.constant(Tensor::scalar(0.0));
    let s = tape.sigmoid(z);
    assert_eq!(tape.value(s).item(), 0.5);
    let one = tape.constant(Tensor::new(&[1, 1], vec![-3.2]).unwrap());
    let sm = tape.softmax_rows(one).unwrap();
    assert_eq!(tape.value(sm).data(), &[1.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = tape.constant(random_tensor(&mut rng, &[20, 13]).map(|v| v * 40.0));
    let sm = tape.softmax_rows(x).unwrap();
    let y = tape.value(sm);
    for r in 0..20 {
        assert!((y.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn causal_softmax_hides_future() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store, Mode::Eval);
    let x = tape.constant(Tensor::full(&[3, 3], 0.3));
    let y = tape.causal_softmax(x).unwrap();
    let y = tape.value(y);
    assert_eq!(y.row(0), &[1.0, 0.0, 0.0]);
    assert_eq!(y.row(1), &[0.5, 0.5, 0.0]);
    assert!((y.row(2).iter().sum::<f64>() - 1.0).abs() < 1e-15);
}

#[test]
fn dropout_modes() {
    let store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_tensor(&mut rng, &[50, 40]);

    let mut tape = Tape::new(&store, Mode::Eval);
    let v = tape.constant(x.clone());
    let d = tape.dropout(v, 0.1, &mut rng).unwrap();
    for (a, b) in tape.value(d).data().iter().zip(x.data()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }

    let mut tape = Tape::new(&store, Mode::Train);
    let v = tape.constant(Tensor::full(&[100, 100], 1.0));
    let d = tape.dropout(v, 0.25, &mut rng).unwrap();
    let vals = tape.value(d).data();
    assert!(vals.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
    let kept = vals.iter().filter(|&&v| v > 0.0).count() as f64 / vals.len() as f64;
    assert!((kept - 0.75).abs() < 0.02, "kept fraction {kept}");
}

/// erf by its Maclaurin series, summed until terms vanish.
fn erf_series(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let mut n = 0u32;
    loop {
        n += 1;
        term *= -x * x / n as f64;
        let add = term / (2 * n + 1) as f64;
        sum += add;
        if add.abs() < 1e-18 {
            break;
        }
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

#[test]
fn gelu_matches_series_oracle() {
    for x in [-2.0f64, -1.0, 0.0, 1.0, 2.0] {
        let oracle = 0.5 * x * (1.0 + erf_series(x / std::f64::consts::SQRT_2));
        let got = planlink::tensor::activation::gelu(x);
        assert!((got - oracle).abs() < 1e-10, "x={x}: {got} vs {oracle}");
    }
}

/// Three-layer MLP with tanh and GELU, summed squared error.
fn mlp_loss(tape: &mut Tape, x: &Tensor, target: &Tensor) -> Result<Var> {
    let xv = tape.constant(x.clone());
    let mut h = xv;
    for layer in 0..3 {
        let w = tape.param(ParamId(2 * layer));
        let b = tape.param(ParamId(2 * layer + 1));
        let z = tape.matmul(h, w)?;
        let z = tape.add_row(z, b)?;
        h = if layer == 0 { tape.tanh(z) } else if layer == 1 { tape.gelu(z) } else { z };
    }
    let t = tape.constant(target.clone());
    let diff = tape.sub(h, t)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.sum_all(sq))
}

fn mlp_store(seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (l, (i, o)) in [(4usize, 6usize), (6, 5), (5, 2)].iter().enumerate() {
        store.add_uniform(format!("w{l}"), &[*i, *o], 0.8, &mut rng);
        store.add_uniform(format!("b{l}"), &[*o], 0.3, &mut rng);
    }
    store
}

#[test]
fn mlp_gradients_match_central_differences() {
    for seed in 0..5 {
        let store = mlp_store(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = random_tensor(&mut rng, &[7, 4]);
        let target = random_tensor(&mut rng, &[7, 2]);
        let mut tape = Tape::new(&store, Mode::Train);
        let l = mlp_loss(&mut tape, &x, &target).unwrap();
        let grads = tape.backward(l).unwrap().into_param_grads();
        let loss = |s: &ParamStore| -> Result<f64> {
            let mut tape = Tape::new(s, Mode::Train);
            let l = mlp_loss(&mut tape, &x, &target)?;
            Ok(tape.value(l).item())
        };
        let report = grad_check(&store, loss, &grads, &GradCheckOptions::default()).unwrap();
        assert!(report.passed, "seed {seed}: {report:?}");
        assert!(report.max_rel_error <= 1e-5);
    }
}

#[test]
fn quadratic_is_exact_and_wrong_gradient_fails() {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::vector(&[0.3, -1.2, 2.0]));
    let loss = |s: &ParamStore| -> Result<f64> {
        Ok(s.get(ParamId(0)).data().iter().map(|w| 1.5 * w * w).sum())
    };
    let exact: Vec<Option<Tensor>> = vec![Some(store.get(id).map(|w| 3.0 * w))];
    let opts = GradCheckOptions {
        tol: 1e-10,
        ..Default::default()
    };
    let report = grad_check(&store, loss, &exact, &opts).unwrap();
    assert!(report.passed, "{report:?}");

    let wrong: Vec<Option<Tensor>> = vec![Some(store.get(id).map(|w| 2.0 * w))];
    let report = grad_check(&store, loss, &wrong, &GradCheckOptions::default()).unwrap();
    assert!(!report.passed);
    assert!(report.max_rel_error > 0.1);
}

#[test]
fn identical_seeds_give_bitwise_identical_training() {
    let run = || {
        let mut store = mlp_store(4);
        let mut adam = planlink::tensor::Adam::new(Default::default(), &store);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let x = random_tensor(&mut rng, &[5, 4]);
            let target = random_tensor(&mut rng, &[5, 2]);
            let grads = {
                let mut tape = Tape::new(&store, Mode::Train);
                let l = mlp_loss(&mut tape, &x, &target).unwrap();
                tape.backward(l).unwrap()
            };
            adam.step(&mut store, &grads);
        }
        store
            .iter()
            .flat_map(|(_, _, t)| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<u64>>()
    };
    assert_eq!(run(), run());
}
