//! Times one CPA training step (forward, backward, Adam) at a given size.
//! Usage: step_timing [model_dim] [ff_dim] [len]

use std::time::Instant;

use planlink::nn::{Model, ModelConfig, PlanInput, Readout, SequenceInput, SlotSpec};
use planlink::synth::{generate_dataset, GameConfig};
use planlink::tensor::{Adam, AdamConfig, Mode, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let (dim, ff, len) = (
        args.first().copied().unwrap_or(1024),
        args.get(1).copied().unwrap_or(2048),
        args.get(2).copied().unwrap_or(71),
    );
    let s = &generate_dataset(&GameConfig::default(), 1).unwrap()[0];
    let streams = vec![SlotSpec::new("move", 8), SlotSpec::new("dialogue", 32), SlotSpec::new("visual", 32)];
    let cfg = ModelConfig {
        model_dim: dim,
        ff_dim: ff,
        ..ModelConfig::new(4, streams, Readout::EdgeScore)
    };
    let mut model = Model::new(cfg, 1).unwrap();
    println!("params {}", model.num_parameters());
    let input = SequenceInput {
        plan: PlanInput::from_partial(&s.partials[0], 4).unwrap(),
        len,
        streams: vec![Tensor::zeros(&[len, 8]), Tensor::zeros(&[len, 32]), Tensor::zeros(&[len, 32])],
    };
    let pairs: Vec<(usize, usize)> = (0..20).map(|k| (k % 5, (k + 1) % 6)).collect();
    let labels: Vec<bool> = (0..20).map(|k| k % 3 == 0).collect();
    let mut adam = Adam::new(AdamConfig::default(), &model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..5 {
        let t0 = Instant::now();
        let grads = {
            let mut tape = Tape::new(&model.store, Mode::Train);
            let (_, l) = model.score_edges(&mut tape, &input, &pairs, &mut rng).unwrap();
            let loss = tape.bce_with_logits(l, &labels).unwrap();
            tape.backward(loss).unwrap()
        };
        let t1 = Instant::now();
        adam.step(&mut model.store, &grads);
        let t2 = Instant::now();
        println!("fwd+bwd {:?}  adam {:?}", t1 - t0, t2 - t1);
    }
}
