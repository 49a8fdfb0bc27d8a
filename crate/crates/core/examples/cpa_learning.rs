//! Trains one CPA model and prints the per-epoch log.
//! Usage: cpa_learning <omk|pmk> <candidate|naive> [sessions] [epochs] [model_dim] [ff_dim] [lr] [seed]

use std::time::Instant;

use planlink::synth::{dataset_stats, generate_dataset, DatasetSplit, GameConfig};
use planlink::tasks::{train_cpa, ArchConfig, CpaTask, Sampling, TrainConfig};

fn main() {
    let a: Vec<String> = std::env::args().skip(1).collect();
    let get = |i: usize, d: &str| a.get(i).cloned().unwrap_or_else(|| d.to_string());
    let task = CpaTask::parse(&get(0, "omk")).unwrap();
    let sampling = Sampling::parse(&get(1, "candidate")).unwrap();
    let n: usize = get(2, "150").parse().unwrap();
    let epochs: usize = get(3, "10").parse().unwrap();
    let dim: usize = get(4, "1024").parse().unwrap();
    let ff: usize = get(5, "2048").parse().unwrap();
    let lr: f64 = get(6, "1e-4").parse().unwrap();
    let seed: u64 = get(7, "1").parse().unwrap();
    let sessions = generate_dataset(&GameConfig::default(), n).unwrap();
    let st = dataset_stats(&sessions);
    println!("mean length {:.1}, nodes {:.1}, edges {:.1}", st.mean_length, st.mean_nodes, st.mean_edges);
    let data = DatasetSplit::from_sessions(sessions);
    let mut cfg = TrainConfig {
        epochs,
        sampling,
        arch: ArchConfig {
            model_dim: dim,
            ff_dim: ff,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.adam.lr = lr;
    let t0 = Instant::now();
    let run = train_cpa(task, &data, &cfg, seed, None).unwrap_or_else(|e| panic!("{e}"));
    for h in &run.fit.history {
        println!("epoch {:3} loss {:.4} val {:.4}", h.epoch, h.train_loss, h.val_score);
    }
    println!(
        "best epoch {} val {:.4} test {:.4} ({:.1}s)",
        run.fit.best_epoch,
        run.val_f1,
        run.test_f1,
        t0.elapsed().as_secs_f64()
    );
}
