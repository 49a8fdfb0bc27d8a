//! Pool sizes, positive counts and the all-positive F1 of each CPA pool.
//! Usage: pool_stats [sessions]

use planlink::analysis::f1_score;
use planlink::synth::{generate_dataset, GameConfig};
use planlink::tasks::{cpa_targets, eval_pool, CpaTask, Sampling};
use rand::SeedableRng;

fn main() {
    let n: usize = std::env::args().nth(1).map_or(150, |a| a.parse().unwrap());
    let sessions = generate_dataset(&GameConfig::default(), n).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for (task, sampling) in [
        (CpaTask::Omk, Sampling::Candidate),
        (CpaTask::Omk, Sampling::Naive),
        (CpaTask::Pmk, Sampling::Candidate),
    ] {
        let (mut pool, mut pos, mut f1, mut units) = (0usize, 0usize, 0.0, 0usize);
        for s in &sessions {
            for p in 0..2 {
                let t = cpa_targets(task, &s.plan, &s.partials, p, sampling, &mut rng).unwrap();
                let ev = eval_pool(task, &s.partials[p], sampling, s.id, p).unwrap();
                if ev.is_empty() {
                    continue;
                }
                let tp = ev.iter().filter(|x| t.positives.contains(x)).count();
                pool += ev.len();
                pos += t.positives.len();
                f1 += f1_score(tp, ev.len() - tp, t.positives.len() - tp);
                units += 1;
            }
        }
        println!(
            "{} {}: units {units}, mean pool {:.1}, mean positives {:.2}, all-positive F1 {:.3}",
            task.name(),
            sampling.name(),
            pool as f64 / units as f64,
            pos as f64 / units as f64,
            f1 / units as f64
        );
    }
}
