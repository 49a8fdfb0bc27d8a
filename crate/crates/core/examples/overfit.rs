//! CPA capacity check: train on 20 sessions, validate on the same sessions.
//! Usage: overfit [omk|pmk] [model_dim] [ff_dim] [epochs] [lr] [dropout] [plan_dim]

use std::time::Instant;

use planlink::synth::{generate_dataset, GameConfig, GameSession};
use planlink::tasks::{dataset_num_tools, train_cpa_on, ArchConfig, CpaSetup, CpaTask, FitOptions, TrainConfig};

fn main() {
    let a: Vec<String> = std::env::args().skip(1).collect();
    let get = |i: usize, d: &str| a.get(i).cloned().unwrap_or_else(|| d.to_string());
    let task = CpaTask::parse(&get(0, "omk")).unwrap();
    let mut cfg = TrainConfig {
        epochs: get(3, "200").parse().unwrap(),
        arch: ArchConfig {
            model_dim: get(1, "1024").parse().unwrap(),
            ff_dim: get(2, "2048").parse().unwrap(),
            dropout: get(5, "0.1").parse().unwrap(),
            plan_dim: get(6, "128").parse().unwrap(),
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.adam.lr = get(4, "1e-4").parse().unwrap();
    let sessions = generate_dataset(&GameConfig::default(), 20).unwrap();
    let refs: Vec<&GameSession> = sessions.iter().collect();
    let setup = CpaSetup::new(task, &cfg, dataset_num_tools(&sessions), None).unwrap();
    let t0 = Instant::now();
    let run = train_cpa_on(&setup, &cfg, 1, &refs, &refs, &refs, FitOptions { stop_at: Some(0.95) }).unwrap();
    for h in run.fit.history.iter().step_by(5) {
        println!("epoch {:3} loss {:.4} train F1 {:.4}", h.epoch, h.train_loss, h.val_score);
    }
    println!("epochs {} train F1 {:.4} ({:.1}s)", run.fit.history.len(), run.val_f1, t0.elapsed().as_secs_f64());
}
