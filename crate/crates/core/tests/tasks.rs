//! Oracles and properties of the task pipelines.

use std::collections::BTreeSet;

use planlink::analysis::TTestResult;
use planlink::nn::Readout;
use planlink::plangraph::{candidate_sampling, naive_pool, Material, MaterialId, PartialPlan, PlanEdge, PlanGraph};
use planlink::synth::{
    generate_dataset, split_knowledge, DatasetSplit, GameConfig, GameSession, ToMAnswer, ToMKind,
};
use planlink::tasks::*;
use planlink::tensor::Tensor;
use planlink::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_arch() -> ArchConfig {
    ArchConfig {
        plan_dim: 16,
        gat_heads: 2,
        model_dim: 32,
        attn_heads: 2,
        ff_dim: 64,
        embed_dim: 8,
        dropout: 0.1,
    }
}

fn tiny_cfg() -> TrainConfig {
    TrainConfig {
        seeds: vec![1],
        epochs: 1,
        arch: tiny_arch(),
        ..Default::default()
    }
}

fn sessions(n: usize) -> Vec<GameSession> {
    generate_dataset(&GameConfig::default(), n).unwrap()
}

// ---------------------------------------------------------------- ground truth

#[test]
fn ground_truth_documented_offsets() {
    let v = encode_tom_ground_truth(ToMKind::Status, MaterialId(0), ToMAnswer::Yes).unwrap();
    let hot: Vec<usize> = (0..GT_WIDTH).filter(|&i| v[i] == 1.0).collect();
    assert_eq!(hot, vec![0, 3, 24]);
    assert_eq!(GT_WIDTH, 46);
}

#[test]
fn ground_truth_exhaustive_round_trip() {
    let mut count = 0;
    for kind in ToMKind::ALL {
        for subject in 0..21 {
            for class in 0..kind.num_classes() {
                let answer = ToMAnswer::from_class(kind, class).unwrap();
                let v = encode_tom_ground_truth(kind, MaterialId(subject), answer).unwrap();
                assert_eq!(v.iter().sum::<f64>(), 3.0);
                assert!(v.iter().all(|&x| x == 0.0 || x == 1.0));
                assert_eq!(decode_tom_ground_truth(&v).unwrap(), (kind, MaterialId(subject), answer));
                count += 1;
            }
        }
    }
    assert_eq!(count, 21 * (3 + 3 + 22));
}

#[test]
fn ground_truth_rejects_out_of_vocabulary_labels() {
    assert!(matches!(
        encode_tom_ground_truth(ToMKind::Status, MaterialId(0), ToMAnswer::NotSure),
        Err(Error::Schema(_))
    ));
    assert!(matches!(
        encode_tom_ground_truth(ToMKind::Intention, MaterialId(0), ToMAnswer::Yes),
        Err(Error::Schema(_))
    ));
    assert!(matches!(
        encode_tom_ground_truth(ToMKind::Knowledge, MaterialId(21), ToMAnswer::No),
        Err(Error::Schema(_))
    ));
    let mut v = encode_tom_ground_truth(ToMKind::Status, MaterialId(4), ToMAnswer::No).unwrap();
    v[5] = 1.0;
    assert!(decode_tom_ground_truth(&v).is_err());
}

// ---------------------------------------------------------------- config

#[test]
fn config_parsing_and_exclusivity() {
    assert_eq!(
        parse_tom_kinds("i,s,s").unwrap(),
        vec![ToMKind::Status, ToMKind::Intention]
    );
    assert!(parse_tom_kinds("x").is_err());
    assert_eq!(Modalities::parse("D+V+M").unwrap(), Modalities::default());
    assert_eq!(Modalities::parse("M").unwrap().label(), "M");
    assert_eq!(subset_label(&[]), "none");
    let subsets = all_subsets();
    assert_eq!(subsets.len(), 8);
    assert!(subsets[0].is_empty());
    let labels: Vec<String> = subsets.iter().map(|s| subset_label(s)).collect();
    assert_eq!(labels, ["none", "S", "K", "I", "S+K", "S+I", "K+I", "S+K+I"]);
    let cfg = TrainConfig {
        tom_features: vec![ToMKind::Status],
        ground_truth_tom: vec![ToMKind::Knowledge],
        ..Default::default()
    };
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    assert_eq!(TrainConfig::default().seeds, vec![1, 42, 123]);
}

// ---------------------------------------------------------------- inputs

#[test]
fn disabled_tom_flags_drop_the_slot_entirely() {
    let s = &sessions(1)[0];
    let none = CpaSetup::new(CpaTask::Omk, &tiny_cfg(), 4, None).unwrap();
    let slots = none.spec.slots(s.dialogue_dim, s.visual_dim, 32);
    assert!(slots.iter().all(|x| !x.name.starts_with("tom")));
    let gt_cfg = TrainConfig {
        ground_truth_tom: vec![ToMKind::Status, ToMKind::Intention],
        ..tiny_cfg()
    };
    let gt = CpaSetup::new(CpaTask::Omk, &gt_cfg, 4, None).unwrap();
    let gt_slots = gt.spec.slots(s.dialogue_dim, s.visual_dim, 32);
    assert_eq!(gt_slots.len(), slots.len() + 1);
    let last = gt_slots.last().unwrap();
    assert_eq!((last.name.as_str(), last.width), ("tom_ground_truth", 2 * GT_WIDTH));
    let none_model = none.model(&tiny_cfg(), 1, s).unwrap();
    let gt_model = gt.model(&gt_cfg, 1, s).unwrap();
    assert_eq!(gt_model.config.input_width(), none_model.config.input_width() + tiny_arch().embed_dim);
    // Learned features without a bank is a data error.
    let learned = TrainConfig {
        tom_features: vec![ToMKind::Status],
        ..tiny_cfg()
    };
    assert!(matches!(CpaSetup::new(CpaTask::Omk, &learned, 4, None), Err(Error::Data(_))));
}

#[test]
fn input_streams_place_observations_and_questions() {
    let s = &sessions(1)[0];
    let spec = InputSpec {
        modalities: Modalities::default(),
        question: Some(ToMKind::Status),
        tom: TomSlot::GroundTruth(vec![ToMKind::Status]),
    };
    let input = build_input(s, 0, &spec, 4, None).unwrap();
    assert_eq!(input.len, s.length);
    assert_eq!(input.streams.len(), 5);
    for o in &s.observations[0] {
        if let Some(m) = o.dialogue_move {
            assert_eq!(input.streams[0].row(o.t)[m.index()], 1.0);
        }
        if let Some(v) = &o.visual {
            assert_eq!(input.streams[2].row(o.t), v.as_slice());
        }
    }
    let qs = player_questions(s, 0, ToMKind::Status);
    assert!(!qs.is_empty());
    let mut question_rows = 0;
    for t in 0..s.length {
        let q = input.streams[3].row(t);
        let gt = input.streams[4].row(t);
        if let Some(rec) = qs.iter().find(|r| r.time == t) {
            assert_eq!(q.iter().sum::<f64>(), 2.0);
            assert_eq!(q[rec.subject.0], 1.0);
            let (kind, subject, answer) = decode_tom_ground_truth(gt).unwrap();
            assert_eq!((kind, subject, answer), (rec.kind, rec.subject, rec.answer));
            question_rows += 1;
        } else {
            assert!(q.iter().all(|&x| x == 0.0));
            assert!(gt.iter().all(|&x| x == 0.0));
        }
    }
    assert_eq!(question_rows, qs.len());
    assert!(build_input(s, 2, &spec, 4, None).is_err());
}

#[test]
fn feature_bank_lookups_fail_for_missing_sessions() {
    let data = sessions(2);
    let mut bank = ToMFeatureBank::new(3);
    bank.insert(data[0].id, 0, vec![(75, vec![1.0, 2.0, 3.0])]).unwrap();
    assert!(bank.insert(data[0].id, 1, vec![(75, vec![1.0])]).is_err());
    let mut banks = FeatureBanks::new();
    banks.insert(ToMKind::Status, bank);
    let spec = InputSpec {
        modalities: Modalities::default(),
        question: None,
        tom: TomSlot::Learned(vec![ToMKind::Status]),
    };
    let input = build_input(&data[0], 0, &spec, 4, Some(&banks)).unwrap();
    assert_eq!(input.streams[3].row(75), &[1.0, 2.0, 3.0]);
    assert!(matches!(build_input(&data[1], 0, &spec, 4, Some(&banks)), Err(Error::Data(_))));
}

// ---------------------------------------------------------------- targets

fn hand_plan() -> (PlanGraph, PartialPlan, PartialPlan) {
    // Goal 9 <- {0, 1, 2} with one tool; three starting materials.
    let mats = vec![
        Material { id: MaterialId(9), is_starting: false },
        Material { id: MaterialId(0), is_starting: true },
        Material { id: MaterialId(1), is_starting: true },
        Material { id: MaterialId(2), is_starting: true },
    ];
    let e = |d| PlanEdge::new(9, d, 0);
    let plan = PlanGraph::new(mats.clone(), vec![e(0), e(1), e(2)], MaterialId(9)).unwrap();
    let p1 = PartialPlan::new(mats.clone(), MaterialId(9), [e(0), e(1)].into_iter().collect(), 1).unwrap();
    let p2 = PartialPlan::new(mats, MaterialId(9), [e(1), e(2)].into_iter().collect(), 2).unwrap();
    (plan, p1, p2)
}

#[test]
fn pmk_positives_match_set_oracle() {
    let (plan, p1, p2) = hand_plan();
    let partials = [p1.clone(), p2.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for player in 0..2 {
        let t = cpa_targets(CpaTask::Pmk, &plan, &partials, player, Sampling::Candidate, &mut rng).unwrap();
        let own: BTreeSet<_> = partials[player].known_edges().iter().map(|e| e.pair()).collect();
        let other: BTreeSet<_> = partials[1 - player].known_edges().iter().map(|e| e.pair()).collect();
        let oracle: BTreeSet<_> = own.difference(&other).copied().collect();
        assert_eq!(t.positives, oracle);
        assert_eq!(t.pool.iter().copied().collect::<BTreeSet<_>>(), own);
    }
    let t0 = cpa_targets(CpaTask::Pmk, &plan, &partials, 0, Sampling::Candidate, &mut rng).unwrap();
    assert_eq!(t0.positives, [(MaterialId(9), MaterialId(0))].into_iter().collect());
    let omk = cpa_targets(CpaTask::Omk, &plan, &partials, 0, Sampling::Candidate, &mut rng).unwrap();
    assert_eq!(omk.positives, [(MaterialId(9), MaterialId(2))].into_iter().collect());
    assert!(omk.pool.contains(&(MaterialId(9), MaterialId(2))));
}

#[test]
fn full_overlap_has_no_omk_positives() {
    let s = &sessions(1)[0];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a, b) = split_knowledge(&s.plan, 1.0, &mut rng).unwrap();
    let t = cpa_targets(CpaTask::Omk, &s.plan, &[a, b], 0, Sampling::Candidate, &mut rng).unwrap();
    assert!(t.positives.is_empty());
    let (pairs, labels) = t.training_pairs();
    assert_eq!(pairs.len(), t.pool.len());
    assert!(labels.iter().all(|l| !l));
}

#[test]
fn all_negative_prediction_scores_zero_with_positives() {
    assert_eq!(all_negative_f1(3), 0.0);
    assert_eq!(all_negative_f1(0), 1.0);
    let p = CpaPrediction {
        task: CpaTask::Omk,
        session: 0,
        player: 0,
        pairs: vec![(MaterialId(9), MaterialId(0)); 3],
        logits: vec![-1.0, 0.0, -2.0],
        decisions: vec![false; 3],
        truth: vec![true, false, false],
        missed: 0,
    };
    assert_eq!(p.f1(), 0.0);
    let hit = CpaPrediction {
        decisions: vec![true, false, false],
        missed: 1,
        ..p
    };
    // One of two positives found with no false positive: 2/(2 + 1).
    assert!((hit.f1() - 2.0 / 3.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn omk_positives_lie_in_the_candidate_pool(seed in 0u64..10_000) {
        let cfg = GameConfig { seed, ..Default::default() };
        let data = generate_dataset(&cfg, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &data {
            for player in 0..2 {
                let t = cpa_targets(CpaTask::Omk, &s.plan, &s.partials, player, Sampling::Candidate, &mut rng).unwrap();
                prop_assert!(t.positives.iter().all(|p| t.pool.contains(p)));
                let own = &s.partials[player];
                let cand = candidate_sampling(own, &own.starting_set()).len();
                prop_assert!(cand <= naive_pool(own).len());
                let naive = eval_pool(CpaTask::Omk, own, Sampling::Naive, s.id, player).unwrap();
                prop_assert_eq!(naive.len(), cand.min(naive_pool(own).len()));
                prop_assert_eq!(&naive, &eval_pool(CpaTask::Omk, own, Sampling::Naive, s.id, player).unwrap());
                let tn = cpa_targets(CpaTask::Omk, &s.plan, &s.partials, player, Sampling::Naive, &mut rng).unwrap();
                prop_assert_eq!(tn.pool.len(), cand);
                let (pairs, labels) = tn.training_pairs();
                prop_assert_eq!(labels.iter().filter(|&&l| l).count(), tn.positives.len());
                prop_assert!(pairs.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}

// ---------------------------------------------------------------- ToM models

#[test]
fn intention_head_has_22_classes() {
    let data = sessions(2);
    let setup = TomSetup::new(ToMKind::Intention, &tiny_cfg(), 4).unwrap();
    let model = setup.model(&tiny_cfg(), 1, &data[0]).unwrap();
    assert_eq!(model.config.readout, Readout::Classes(22));
    let status = TomSetup::new(ToMKind::Status, &tiny_cfg(), 4).unwrap();
    assert_eq!(status.model(&tiny_cfg(), 1, &data[0]).unwrap().config.readout, Readout::Classes(3));
}

#[test]
fn empty_question_set_is_a_data_error() {
    let mut data = sessions(5);
    for s in &mut data {
        s.questions.retain(|q| q.kind != ToMKind::Knowledge);
    }
    let refs: Vec<&GameSession> = data.iter().collect();
    let setup = TomSetup::new(ToMKind::Knowledge, &tiny_cfg(), 4).unwrap();
    let r = train_tom_on(&setup, &tiny_cfg(), 1, &refs, &refs, &refs, FitOptions::default());
    assert!(matches!(r, Err(Error::Data(_))));
}

/// Rebalances Status answers round-robin so every class is equally common.
fn balanced_status(mut data: Vec<GameSession>) -> Vec<GameSession> {
    let mut k = 0;
    for s in &mut data {
        for q in s.questions.iter_mut().filter(|q| q.kind == ToMKind::Status) {
            q.answer = ToMAnswer::from_class(ToMKind::Status, k % 3).unwrap();
            k += 1;
        }
    }
    data
}

#[test]
fn untrained_tom_model_is_at_chance() {
    let data = balanced_status(sessions(12));
    let refs: Vec<&GameSession> = data.iter().collect();
    let cfg = tiny_cfg();
    let setup = TomSetup::new(ToMKind::Status, &cfg, 4).unwrap();
    let scores: Vec<f64> = (0..5u64)
        .map(|init| {
            let model = setup.model(&cfg, init, &data[0]).unwrap();
            setup.evaluate(&model, &refs).unwrap()
        })
        .collect();
    let mean = scores.iter().sum::<f64>() / 5.0;
    assert!((mean - 1.0 / 3.0).abs() <= 0.1, "untrained macro-F1 {scores:?}");
}

#[test]
fn status_model_overfits_twenty_sessions() {
    let data = sessions(20);
    let refs: Vec<&GameSession> = data.iter().collect();
    let mut cfg = tiny_cfg();
    cfg.arch.model_dim = 64;
    cfg.arch.ff_dim = 128;
    cfg.arch.dropout = 0.0;
    cfg.epochs = 200;
    cfg.adam.lr = 3e-3;
    let setup = TomSetup::new(ToMKind::Status, &cfg, dataset_num_tools(&data)).unwrap();
    let run = train_tom_on(&setup, &cfg, 1, &refs, &refs, &refs, FitOptions { stop_at: Some(0.95) }).unwrap();
    assert!(run.val_f1 >= 0.95, "train macro-F1 {} after {} epochs", run.val_f1, run.fit.history.len());
}

#[test]
fn tom_features_are_deterministic_and_model_width() {
    let data = sessions(3);
    let cfg = tiny_cfg();
    let setup = TomSetup::new(ToMKind::Status, &cfg, 4).unwrap();
    let model = setup.model(&cfg, 7, &data[0]).unwrap();
    let a = setup.features(&model, &data[0], 0).unwrap();
    let b = setup.features(&model, &data[0], 0).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), player_questions(&data[0], 0, ToMKind::Status).len());
    assert!(a.iter().all(|(_, f)| f.len() == cfg.arch.model_dim));
    // A session with every observation removed still yields finite features.
    let mut blank = data[0].clone();
    for obs in &mut blank.observations {
        obs.clear();
    }
    let z = setup.features(&model, &blank, 0).unwrap();
    assert_eq!(z.len(), a.len());
    assert!(z.iter().all(|(_, f)| f.iter().all(|x| x.is_finite())));
    assert_ne!(z, a);
}

#[test]
fn feature_bank_covers_every_player() {
    let data = DatasetSplit::from_sessions(sessions(10));
    let mut cfg = tiny_cfg();
    cfg.epochs = 1;
    let run = train_tom(ToMKind::Status, &data, &cfg, 1).unwrap();
    assert_eq!(run.fit.history.len(), 1);
    let bank = build_feature_bank(&run, data.all()).unwrap();
    assert_eq!(bank.width, 32);
    assert_eq!(bank.entries.len(), 2 * data.len());
    for s in data.all() {
        for p in 0..2 {
            let times: Vec<usize> = bank.get(s.id, p).unwrap().iter().map(|(t, _)| *t).collect();
            let expected: Vec<usize> = player_questions(s, p, ToMKind::Status).iter().map(|q| q.time).collect();
            assert_eq!(times, expected);
        }
    }
    let preds = run.test_predictions.clone();
    let per_instance = tom_instance_scores(ToMKind::Status, &preds).unwrap();
    assert!(per_instance.iter().all(|s| (0.0..=1.0).contains(&s.f1)));
}

// ---------------------------------------------------------------- CPA models

#[test]
fn cpa_training_is_deterministic() {
    let data = DatasetSplit::from_sessions(sessions(10));
    let mut cfg = tiny_cfg();
    cfg.epochs = 2;
    let a = train_cpa(CpaTask::Omk, &data, &cfg, 42, None).unwrap();
    let b = train_cpa(CpaTask::Omk, &data, &cfg, 42, None).unwrap();
    assert_eq!(a.test_scores, b.test_scores);
    assert_eq!(a.fit, b.fit);
    for id in a.model.store.ids() {
        assert_eq!(a.model.store.get(id), b.model.store.get(id));
    }
    assert_eq!(a.fit.history.len(), 2);
    assert!((1..=2).contains(&a.fit.best_epoch));
    // Test F1 is the mean over (session, player) instances.
    let mean = a.test_scores.iter().map(|s| s.f1).sum::<f64>() / a.test_scores.len() as f64;
    assert!((a.test_f1 - mean).abs() < 1e-12);
}

#[test]
fn cpa_predictions_follow_the_threshold() {
    let data = sessions(4);
    let cfg = tiny_cfg();
    let setup = CpaSetup::new(CpaTask::Pmk, &cfg, 4, None).unwrap();
    let model = setup.model(&cfg, 3, &data[0]).unwrap();
    let p = setup.predict(&model, &data[0], 1).unwrap().unwrap();
    assert_eq!(p.pairs.len(), data[0].partials[1].known_edges().len());
    for (l, d) in p.logits.iter().zip(&p.decisions) {
        assert_eq!(*d, 1.0 / (1.0 + (-l).exp()) > 0.5);
    }
    let c = setup.context(&model, &data[0], 1).unwrap();
    assert_eq!(c.len(), cfg.arch.model_dim);
}

// ---------------------------------------------------------------- tables

#[test]
fn published_overall_arithmetic() {
    assert!(overall_consistent(57.6, 56.2, 56.9, OVERALL_TOLERANCE));
    assert!(overall_consistent(27.7, 65.4, 46.6, OVERALL_TOLERANCE));
    let checks = published_overall_checks();
    assert_eq!(checks.len(), 16);
    let failing: Vec<_> = checks.iter().filter(|c| !c.pass).collect();
    // (57.1 + 56.6) / 2 = 56.85 against a printed 56.7.
    assert_eq!(failing.len(), 1);
    assert_eq!((failing[0].subset, failing[0].model), ("S+K+I", "ours"));
    assert!((failing[0].recomputed - 56.85).abs() < 1e-9);
}

// ---------------------------------------------------------------- ablation

fn fake_runs(mode: AblationMode, seeds: &[u64]) -> Vec<RunSummary> {
    let mut out = Vec::new();
    for (si, subset) in all_subsets().into_iter().enumerate() {
        for (k, &seed) in seeds.iter().enumerate() {
            for &column in Column::for_mode(mode) {
                let scores: Vec<InstanceScore> = (0..6u64)
                    .map(|i| InstanceScore {
                        session: i / 2,
                        player: (i % 2) as usize,
                        f1: ((i as f64 * 0.37 + k as f64 * 0.11 + si as f64 * 0.05) % 1.0),
                    })
                    .collect();
                out.push(RunSummary {
                    column,
                    subset: subset.clone(),
                    seed,
                    best_epoch: 1,
                    val_f1: 0.5,
                    test_f1: scores.iter().map(|s| s.f1).sum::<f64>() / 6.0,
                    test_scores: scores,
                    model: None,
                });
            }
        }
    }
    out
}

#[test]
fn ablation_rows_have_the_table_layout() {
    let seeds = [1, 42, 123];
    for mode in [AblationMode::Learned, AblationMode::GroundTruth] {
        let runs = fake_runs(mode, &seeds);
        let rows = assemble_rows(mode, &seeds, &runs).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows[0].subset.is_empty());
        assert!(rows[0].cells().iter().all(|(_, c)| c.ttest.is_none()));
        for r in &rows[1..] {
            assert!(r.cells().iter().all(|(_, c)| c.ttest.is_some()), "{}", r.label);
            assert_eq!(r.omk.ttest.unwrap().n, 18);
        }
        assert_eq!(rows[0].omk_naive.is_some(), mode == AblationMode::Learned);
        for r in &rows {
            assert!((r.overall.mean - 0.5 * (r.omk.mean + r.pmk.mean)).abs() < 1e-12);
        }
        let report = AblationReport {
            mode,
            seeds: seeds.to_vec(),
            rows,
            runs,
        };
        assert!(ablation_overall_checks(&report).iter().all(|(_, ok)| *ok));
        let mut table = Vec::new();
        write_ablation_table(&mut table, &report).unwrap();
        let text = String::from_utf8(table).unwrap();
        assert_eq!(text.lines().count(), 9);
        let header = text.lines().next().unwrap();
        assert_eq!(header.contains("omk_ns_mean"), mode == AblationMode::Learned);
        assert!(header.ends_with("note"));
        let records = ablation_records(&report);
        let mut buf = Vec::new();
        write_records(&mut buf, &records).unwrap();
        let back: Vec<MetricRecord> = read_records(buf.as_slice()).unwrap();
        assert_eq!(back, records);
        assert!(report.best_subset().is_some_and(|r| !r.subset.is_empty()));
    }
}

#[test]
fn insignificant_comparisons_are_noted() {
    let t = |p| TTestResult {
        t: 0.5,
        df: 5.0,
        p,
        n: 6,
        mean_difference: 0.01,
    };
    let cell = |p: Option<f64>| MetricCell {
        mean: 0.5,
        std: 0.0,
        ttest: p.map(t),
    };
    let row = AblationRow {
        subset: vec![ToMKind::Status],
        label: "S".into(),
        overall: cell(Some(0.2)),
        omk: cell(Some(0.01)),
        omk_naive: None,
        pmk: cell(Some(0.7)),
    };
    assert_eq!(row.note(), "p > 0.05 vs none: overall pmk");
    let sig = AblationRow {
        overall: cell(Some(0.01)),
        pmk: cell(Some(0.04)),
        ..row
    };
    assert_eq!(sig.note(), "");
}

#[test]
fn parallel_runner_keeps_item_order() {
    let items: Vec<u64> = (0..50).collect();
    let out = run_parallel(4, &items, |&x| Ok(x * x)).unwrap();
    assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
    let err = run_parallel(2, &items, |&x| if x == 7 { Err(Error::Data("seven".into())) } else { Ok(x) });
    assert!(err.is_err());
    let _ = Tensor::zeros(&[1, 1]);
}

#[test]
fn reports_rebuild_from_their_csv_records() {
    let seeds = [1, 42, 123];
    for mode in [AblationMode::Learned, AblationMode::GroundTruth] {
        let runs = fake_runs(mode, &seeds);
        let report = AblationReport {
            mode,
            seeds: seeds.to_vec(),
            rows: assemble_rows(mode, &seeds, &runs).unwrap(),
            runs,
        };
        let table = |r: &AblationReport| {
            let mut buf = Vec::new();
            write_ablation_table(&mut buf, r).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let rebuilt = report_from_records(&ablation_records(&report), &instance_records(&report)).unwrap();
        assert_eq!(rebuilt.mode, mode);
        assert_eq!(rebuilt.seeds, seeds);
        assert_eq!(table(&rebuilt), table(&report));

        // Correlation from records: ToM F1 equal to the OMK gain gives r = 1.
        let best = report.best_subset().unwrap().subset.clone();
        let gain = |seed: u64| {
            let with = report.run(Column::Omk, &best, seed).unwrap();
            let without = report.run(Column::Omk, &[], seed).unwrap();
            with.test_scores
                .iter()
                .zip(&without.test_scores)
                .map(|(a, b)| ((a.session, a.player), a.f1 - b.f1))
                .collect::<Vec<_>>()
        };
        let mut tom = Vec::new();
        for &seed in &seeds {
            for ((session, player), d) in gain(seed) {
                for k in &best {
                    tom.push(TomInstanceRecord {
                        kind: k.name().into(),
                        seed,
                        session,
                        player,
                        f1: d,
                    });
                }
            }
        }
        let (label, points) = correlation_points_with(&rebuilt, |s, k| tom_f1_from_records(&tom, s, k)).unwrap();
        assert_eq!(label, subset_label(&best));
        assert_eq!(points.len(), 6);
        for p in &points {
            assert!((p.tom_f1 - p.delta_f1).abs() < 1e-12);
        }
        assert!(tom_f1_from_records(&tom, 7, &best).is_err());
    }
    assert_eq!(parse_subset_label("none").unwrap(), Vec::<ToMKind>::new());
    assert_eq!(parse_subset_label("S+K+I").unwrap(), ToMKind::ALL.to_vec());
}

#[test]
fn train_config_key_values_round_trip() {
    let mut cfg = TrainConfig {
        seeds: vec![3, 9],
        epochs: 7,
        tom_features: vec![ToMKind::Status, ToMKind::Intention],
        sampling: Sampling::Naive,
        select_on_val: false,
        ..Default::default()
    };
    cfg.modalities = Modalities::parse("M,V").unwrap();
    cfg.adam.lr = 3e-4;
    cfg.arch.plan_dim = 64;
    cfg.arch.dropout = 0.0;
    let kv = cfg.to_key_values();
    assert_eq!(kv.len(), TrainConfig::KEYS.len());
    let mut back = TrainConfig::default();
    for (k, v) in &kv {
        assert!(back.set(k, v).unwrap(), "{k}");
    }
    assert_eq!(back, cfg);
    assert!(!back.set("num_tools", "4").unwrap());
    assert!(back.set("epochs", "many").is_err());
    assert!(back.set("tom_features", "x").is_err());
    back.set("ground_truth_tom", "k").unwrap();
    assert!(matches!(back.validate(), Err(Error::Config(_))));
    back.set("tom_features", "").unwrap();
    back.validate().unwrap();
}
