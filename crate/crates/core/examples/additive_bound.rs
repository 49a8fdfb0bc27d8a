//! Counts training instances whose OMK labels contain an additive-scorer
//! obstruction: positives (u1,v1), (u2,v2) whose crossed pairs (u1,v2),
//! (u2,v1) are both pool negatives. No score a(u) + b(v) separates those.

use planlink::synth::{generate_dataset, GameConfig};
use planlink::tasks::{cpa_targets, CpaTask, Sampling};
use rand::SeedableRng;

fn main() {
    let n: usize = std::env::args().nth(1).map_or(20, |a| a.parse().unwrap());
    let sessions = generate_dataset(&GameConfig::default(), n).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for task in [CpaTask::Omk, CpaTask::Pmk] {
        let (mut bad, mut units) = (0, 0);
        for s in &sessions {
            for p in 0..2 {
                let t = cpa_targets(task, &s.plan, &s.partials, p, Sampling::Candidate, &mut rng).unwrap();
                if t.pool.is_empty() {
                    continue;
                }
                units += 1;
                let neg = |x| t.pool.contains(&x) && !t.positives.contains(&x);
                let obstructed = t.positives.iter().any(|&(u1, v1)| {
                    t.positives.iter().any(|&(u2, v2)| neg((u1, v2)) && neg((u2, v1)))
                });
                bad += usize::from(obstructed);
            }
        }
        println!("{}: {bad} of {units} instances obstructed", task.name());
    }
}
