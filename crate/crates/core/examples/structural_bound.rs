//! How well pair-additive structural features separate missing edges:
//! logistic regression on per-node degree features, scored like CPA.

use planlink::analysis::{binary_f1, fit_logistic, ProbeConfig};
use planlink::plangraph::PartialPlan;
use planlink::synth::{generate_dataset, GameConfig, GameSession, Split};
use planlink::tasks::{cpa_targets, eval_pool, CpaTask, Sampling};
use planlink::tensor::Tensor;
use rand::SeedableRng;

fn node_feats(p: &PartialPlan, m: planlink::plangraph::MaterialId) -> Vec<f64> {
    let g = p.view();
    let s = p.starting_set();
    let (i, o) = (g.in_degree(m), g.out_degree(m));
    let mut v = vec![0.0; 12];
    if std::env::var("INDEG").is_ok() { v[i.min(3)] = 1.0; }
    if std::env::var("OUTDEG").is_ok() { v[4 + o.min(4)] = 1.0; }
    v[9] = f64::from(u8::from(s.contains(&m)));
    v[10] = f64::from(u8::from(p.goal() == m));
    v[11] = 1.0;
    v
}

fn main() {
    let sessions = generate_dataset(&GameConfig::default(), 300).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    for (task, sampling) in [(CpaTask::Omk, Sampling::Candidate), (CpaTask::Omk, Sampling::Naive), (CpaTask::Pmk, Sampling::Candidate)] {
        let rows = |s: &GameSession, p: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let t = cpa_targets(task, &s.plan, &s.partials, p, sampling, rng).unwrap();
            let pool = eval_pool(task, &s.partials[p], sampling, s.id, p).unwrap();
            pool.iter()
                .map(|&(u, v)| {
                    let mut f = node_feats(&s.partials[p], u);
                    f.extend(node_feats(&s.partials[p], v));
                    (f, t.positives.contains(&(u, v)))
                })
                .collect::<Vec<_>>()
        };
        let mut x = Vec::new();
        let mut y = Vec::new();
        for s in sessions.iter().filter(|s| s.split == Split::Train) {
            for p in 0..2 {
                for (f, l) in rows(s, p, &mut rng) {
                    x.extend(f);
                    y.push(usize::from(l));
                }
            }
        }
        let n = y.len();
        let fit = fit_logistic(&Tensor::new(&[n, 24], x).unwrap(), &y, 2, &ProbeConfig { max_iters: 3000, ..Default::default() }).unwrap();
        let mut f1 = 0.0;
        let mut units = 0;
        for s in sessions.iter().filter(|s| s.split == Split::Test) {
            for p in 0..2 {
                let r = rows(s, p, &mut rng);
                if r.is_empty() {
                    continue;
                }
                let xs: Vec<f64> = r.iter().flat_map(|(f, _)| f.clone()).collect();
                let pred = fit.model.predict(&Tensor::new(&[r.len(), 24], xs).unwrap()).unwrap();
                let truth: Vec<bool> = r.iter().map(|(_, l)| *l).collect();
                let dec: Vec<bool> = pred.iter().map(|&c| c == 1).collect();
                f1 += binary_f1(&truth, &dec).unwrap();
                units += 1;
            }
        }
        println!("{} {}: structural LR test F1 {:.3}", task.name(), sampling.name(), f1 / units as f64);
    }
}
