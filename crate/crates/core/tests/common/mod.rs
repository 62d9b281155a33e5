//! Property checks shared by `properties.rs` (one test each) and the
//! acceptance target (which runs them all and reports).

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use journey_risk_core::baselines::{knn_impute, mean_impute, time_intervals, KnnImputer};
use journey_risk_core::conv::{conv_forward, pad_journey, ConvParams};
use journey_risk_core::data::{default_feature_names, split_dataset, DEFAULT_RATIOS};
use journey_risk_core::datagen::{self, GenConfig};
use journey_risk_core::protocol::{evaluate_checkpoint, fit_model, run_once};
use journey_risk_core::TrainConfig;
use journey_risk_core::gru::{gru_sequence_forward, GruParams};
use journey_risk_core::model::{
    accumulate_gradients, model_backward, model_forward, patient_loss, softmax, weighted_cross_entropy, ClassWeights,
};
use journey_risk_core::numerics::{matmul, relu, sigmoid, tanh_act};
use journey_risk_core::{
    auprc, auroc, Dataset, DenseMatrix, Mask, ModelParams, NormMode, Normalizer, PatientJourney, Rng, ScoredSet,
    Variant,
};

pub type Outcome = Result<(), String>;

const CASES: u32 = 256;

fn runner(cases: u32) -> TestRunner {
    let cfg = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Outcome
where
    S::Value: std::fmt::Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.uniform(lo, hi))
}

/// Random cohort: values in [−3, 8], roughly `miss` of cells missing,
/// both labels present once `p ≥ 2`.
pub fn random_dataset(seed: u64, p: usize, n: usize, t_max: usize, miss: f64) -> Dataset {
    let mut rng = Rng::new(seed);
    let journeys = (0..p)
        .map(|i| {
            let t = 1 + rng.below(t_max as u64) as usize;
            let values = random_matrix(&mut rng, n, t, -3.0, 8.0);
            let mut mask = Mask::new(n, t, true);
            for f in 0..n {
                for s in 0..t {
                    if rng.next_f64() < miss {
                        mask.set(f, s, false);
                    }
                }
            }
            PatientJourney::new(format!("j{i}"), (i % 2) as u8, values, mask, None).unwrap()
        })
        .collect();
    Dataset::new(journeys, n, default_feature_names(n)).unwrap()
}

fn random_gru(rng: &mut Rng, n: usize, g: usize) -> GruParams {
    let mut p = GruParams::zeros(n, g);
    for m in [&mut p.w_r, &mut p.w_u, &mut p.w_h, &mut p.b_r, &mut p.b_u, &mut p.b_h] {
        for v in m.as_mut_slice() {
            *v = rng.uniform(-2.0, 2.0);
        }
    }
    p
}

fn random_model(seed: u64, n: usize, g: usize, variant: Variant) -> ModelParams {
    let mut p = ModelParams::init(n, g, 3, seed, variant).unwrap();
    let mut rng = Rng::derive(seed, 77);
    for (_, t) in p.tensors_mut() {
        for v in t.as_mut_slice() {
            *v += rng.uniform(-0.3, 0.3);
        }
    }
    p
}

fn labels_strategy(n: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..=1, n).prop_filter("both classes", |l| l.contains(&0) && l.contains(&1))
}

// numerics

pub fn matmul_associative() -> Outcome {
    check(CASES, (any::<u64>(), 1usize..6, 1usize..6, 1usize..6, 1usize..6), |(seed, a, b, c, d)| {
        let mut rng = Rng::new(seed);
        let x = random_matrix(&mut rng, a, b, -2.0, 2.0);
        let y = random_matrix(&mut rng, b, c, -2.0, 2.0);
        let z = random_matrix(&mut rng, c, d, -2.0, 2.0);
        let left = matmul(&matmul(&x, &y).unwrap(), &z).unwrap();
        let right = matmul(&x, &matmul(&y, &z).unwrap()).unwrap();
        let scale = left.max_abs().max(1.0);
        for (l, r) in left.as_slice().iter().zip(right.as_slice()) {
            prop_assert!((l - r).abs() <= 1e-9 * scale, "{l} vs {r}");
        }
        Ok(())
    })
}

pub fn activations_monotone() -> Outcome {
    check(CASES, prop::collection::vec(-50.0f64..50.0, 2..64), |mut xs| {
        xs.sort_by(f64::total_cmp);
        for f in [relu as fn(f64) -> f64, sigmoid, tanh_act] {
            for w in xs.windows(2) {
                prop_assert!(f(w[0]) <= f(w[1]));
            }
        }
        Ok(())
    })
}

pub fn rng_reproducible() -> Outcome {
    check(16, any::<u64>(), |seed| {
        let mut a = Rng::new(seed);
        let mut b = Rng::new(seed);
        for _ in 0..10_000 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
        Ok(())
    })
}

// journey data

pub fn prepare_keeps_mask_structure() -> Outcome {
    check(CASES, (any::<u64>(), 2usize..10, 1usize..5, 0.0f64..0.9), |(seed, p, n, miss)| {
        let ds = random_dataset(seed, p, n, 8, miss);
        for mode in [NormMode::PaperScale, NormMode::Zscore] {
            let norm = Normalizer::fit(&ds, mode);
            for j in ds.journeys() {
                let x = norm.prepare_matrix(j);
                prop_assert_eq!(x.shape(), j.values().shape());
                for f in 0..j.n_features() {
                    for t in 0..j.len() {
                        if !j.mask().get(f, t) {
                            prop_assert_eq!(x.get(f, t).to_bits(), 0.0f64.to_bits());
                        }
                    }
                }
                prop_assert!(x.is_finite());
            }
        }
        Ok(())
    })
}

pub fn split_partitions() -> Outcome {
    check(CASES, (any::<u64>(), 10usize..80), |(seed, p)| {
        let ds = random_dataset(seed, p, 1, 2, 0.0);
        let (a, b, c) = split_dataset(&ds, (0.7, 0.15, 0.15), seed).unwrap();
        let mut ids: Vec<&str> = [&a, &b, &c].iter().flat_map(|d| d.journeys().iter().map(|j| j.id.as_str())).collect();
        prop_assert_eq!(ids.len(), p);
        ids.sort_unstable();
        ids.dedup();
        prop_assert_eq!(ids.len(), p);
        Ok(())
    })
}

// conv

fn conv_case() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..5, 1usize..12)
}

fn random_conv(rng: &mut Rng, n: usize) -> ConvParams {
    ConvParams {
        kernels: random_matrix(rng, n, 3, -1.5, 1.5),
        biases: random_matrix(rng, n, 1, -0.5, 0.5),
    }
}

pub fn conv_length_and_range() -> Outcome {
    check(CASES, conv_case(), |(seed, n, t)| {
        let mut rng = Rng::new(seed);
        let p = random_conv(&mut rng, n);
        let x = random_matrix(&mut rng, n, t, -2.0, 2.0);
        let (z, _) = conv_forward(&pad_journey(&x).unwrap(), &p).unwrap();
        prop_assert_eq!(z.shape(), (n, t));
        prop_assert!(z.as_slice().iter().all(|v| *v >= 0.0));
        Ok(())
    })
}

/// Perturbing input cell (m, s) may change only output cells (m, s−1..=s+1).
pub fn conv_depthwise_and_local() -> Outcome {
    check(CASES, (conv_case(), any::<u64>()), |((seed, n, t), pick)| {
        let mut rng = Rng::new(seed);
        let p = random_conv(&mut rng, n);
        let x = random_matrix(&mut rng, n, t, -2.0, 2.0);
        let (m, s) = ((pick % n as u64) as usize, ((pick >> 32) % t as u64) as usize);
        let mut x2 = x.clone();
        x2.set(m, s, x.get(m, s) + 1.0 + rng.next_f64());
        let (z1, _) = conv_forward(&pad_journey(&x).unwrap(), &p).unwrap();
        let (z2, _) = conv_forward(&pad_journey(&x2).unwrap(), &p).unwrap();
        for r in 0..n {
            for c in 0..t {
                let near = r == m && c + 1 >= s && c <= s + 1;
                if !near {
                    prop_assert_eq!(z1.get(r, c).to_bits(), z2.get(r, c).to_bits(), "cell ({}, {})", r, c);
                }
            }
        }
        Ok(())
    })
}

// gru

fn gru_case() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 1usize..5, 1usize..6, 1usize..15)
}

pub fn gru_gate_ranges_and_bound() -> Outcome {
    check(CASES, gru_case(), |(seed, n, g, t)| {
        let mut rng = Rng::new(seed);
        let p = random_gru(&mut rng, n, g);
        let z = random_matrix(&mut rng, n, t, -3.0, 3.0);
        let (h_t, trace) = gru_sequence_forward(&z, &p).unwrap();
        for st in &trace.steps {
            prop_assert!(st.r.iter().chain(&st.u).all(|v| *v > 0.0 && *v < 1.0));
            prop_assert!(st.h_tilde.iter().all(|v| *v > -1.0 && *v < 1.0));
            prop_assert!(st.h.iter().all(|v| v.abs() <= 1.0));
        }
        prop_assert_eq!(&h_t, &trace.steps.last().unwrap().h);
        Ok(())
    })
}

pub fn gru_convex_combination() -> Outcome {
    check(CASES, gru_case(), |(seed, n, g, t)| {
        let mut rng = Rng::new(seed);
        let p = random_gru(&mut rng, n, g);
        let z = random_matrix(&mut rng, n, t, -3.0, 3.0);
        let (_, trace) = gru_sequence_forward(&z, &p).unwrap();
        for st in &trace.steps {
            for i in 0..g {
                let (a, b) = (st.h_prev[i], st.h_tilde[i]);
                let (lo, hi) = (a.min(b), a.max(b));
                prop_assert!(st.h[i] >= lo - 1e-15 && st.h[i] <= hi + 1e-15);
                let want = st.u[i] * a + (1.0 - st.u[i]) * b;
                prop_assert!((st.h[i] - want).abs() <= 1e-15);
            }
        }
        Ok(())
    })
}

pub fn gru_deterministic() -> Outcome {
    check(CASES, gru_case(), |(seed, n, g, t)| {
        let mut rng = Rng::new(seed);
        let p = random_gru(&mut rng, n, g);
        let z = random_matrix(&mut rng, n, t, -3.0, 3.0);
        let a = gru_sequence_forward(&z, &p).unwrap().0;
        let b = gru_sequence_forward(&z, &p.clone()).unwrap().0;
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        Ok(())
    })
}

// model

pub fn softmax_normalized() -> Outcome {
    check(CASES * 4, (-700.0f64..700.0, -700.0f64..700.0), |(a, b)| {
        let p = softmax([a, b]);
        prop_assert!(p[0] >= 0.0 && p[1] >= 0.0);
        prop_assert!((p[0] + p[1] - 1.0).abs() <= 1e-12);
        Ok(())
    })
}

pub fn loss_nonnegative() -> Outcome {
    check(CASES, (any::<u64>(), 1usize..4, 1usize..8, 0.0f64..3.0, 0.0f64..3.0), |(seed, n, t, w0, w1)| {
        let p = random_model(seed, n, 4, Variant::Full);
        let mut rng = Rng::derive(seed, 1);
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for i in 0..3 {
            let x = random_matrix(&mut rng, n, t, 0.0, 1.0);
            let pred = model_forward(&x, &p).unwrap().0;
            prop_assert!(pred.probs.iter().all(|v| *v > 0.0));
            prop_assert!((pred.probs[0] + pred.probs[1] - 1.0).abs() <= 1e-12);
            let y = (i % 2) as u8;
            prop_assert!(patient_loss(&pred, y, ClassWeights(w0, w1)) >= 0.0);
            preds.push(pred);
            labels.push(y);
        }
        prop_assert!(weighted_cross_entropy(&preds, &labels, ClassWeights(w0, w1)).unwrap() >= 0.0);
        Ok(())
    })
}

/// The gradient of a batch-mean loss equals the mean of per-patient gradients.
pub fn batch_gradient_is_mean() -> Outcome {
    let variants = prop_oneof![Just(Variant::Full), Just(Variant::NoRecurrent), Just(Variant::GruOnly)];
    check(32, (any::<u64>(), 1usize..4, 1usize..7, 1usize..6, variants), |(seed, n, t, b, variant)| {
        let p = random_model(seed, n, 3, variant);
        let mut rng = Rng::derive(seed, 2);
        let w = ClassWeights(0.8, 1.6);
        let mut batch = p.zeros_like();
        let mut mean = p.zeros_like();
        for i in 0..b {
            let x = random_matrix(&mut rng, n, t, 0.0, 1.0);
            let y = (i % 2) as u8;
            let (_, cache) = model_forward(&x, &p).unwrap();
            accumulate_gradients(&p, &cache, y, w, 1.0 / b as f64, &mut batch).unwrap();
            let single = model_backward(&p, &cache, y, w).unwrap();
            for ((_, m), (_, s)) in mean.tensors_mut().into_iter().zip(single.tensors()) {
                m.add_scaled(s, 1.0 / b as f64).unwrap();
            }
        }
        for ((name, a), (_, m)) in batch.tensors().into_iter().zip(mean.tensors()) {
            for (x, y) in a.as_slice().iter().zip(m.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12, "{}: {} vs {}", name, x, y);
            }
        }
        Ok(())
    })
}

// metrics

pub fn auroc_monotone_invariant() -> Outcome {
    let case = (2usize..80).prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), labels_strategy(n)));
    check(CASES, case, |(scores, labels)| {
        let base = ScoredSet::new(scores.clone(), labels.clone()).unwrap();
        let (a, p) = (auroc(&base).unwrap(), auprc(&base).unwrap());
        let transforms: [fn(f64) -> f64; 3] = [|s| s.exp(), |s| 3.0 * s - 7.0, |s| s.powi(3) + s];
        for f in transforms {
            let moved = ScoredSet::new(scores.iter().map(|s| f(*s)).collect(), labels.clone()).unwrap();
            prop_assert_eq!(auroc(&moved).unwrap().to_bits(), a.to_bits());
            prop_assert_eq!(auprc(&moved).unwrap().to_bits(), p.to_bits());
        }
        Ok(())
    })
}

pub fn auroc_complement() -> Outcome {
    let case = (2usize..80).prop_flat_map(|n| (prop::collection::vec(0u8..6, n), labels_strategy(n)));
    check(CASES, case, |(coarse, labels)| {
        // coarse scores force ties
        let scores: Vec<f64> = coarse.iter().map(|c| *c as f64 / 5.0).collect();
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        let a = auroc(&ScoredSet::new(scores.clone(), labels).unwrap()).unwrap();
        let b = auroc(&ScoredSet::new(scores, flipped).unwrap()).unwrap();
        prop_assert_eq!(a + b, 1.0);
        Ok(())
    })
}

pub fn auprc_bounds() -> Outcome {
    check(CASES, (2usize..80).prop_flat_map(labels_strategy), |labels| {
        let prev = labels.iter().filter(|l| **l == 1).count() as f64 / labels.len() as f64;
        let perfect: Vec<f64> = labels.iter().map(|l| *l as f64).collect();
        let ap = auprc(&ScoredSet::new(perfect, labels.clone()).unwrap()).unwrap();
        prop_assert!(ap >= prev);
        prop_assert!((ap - 1.0).abs() <= 1e-12);
        let tied = auprc(&ScoredSet::new(vec![0.5; labels.len()], labels).unwrap()).unwrap();
        prop_assert!((tied - prev).abs() <= 1e-12);
        Ok(())
    })
}

// baselines

pub fn imputation_keeps_observed() -> Outcome {
    check(CASES, (any::<u64>(), 2usize..12, 1usize..5, 0.0f64..0.9, 1usize..4), |(seed, p, n, miss, k)| {
        let train = random_dataset(seed, p, n, 8, miss);
        let query = random_dataset(seed ^ 1, p, n, 8, miss);
        let k = k.min(train.len());
        let filled = [
            mean_impute(&Normalizer::fit(&train, NormMode::PaperScale), &query).unwrap(),
            knn_impute(&train, &query, k).unwrap(),
        ];
        for out in &filled {
            for ((orig, new), imputed) in query.journeys().iter().zip(out.dataset.journeys()).zip(&out.imputed) {
                prop_assert!(new.mask().all_observed());
                for f in 0..n {
                    for t in 0..orig.len() {
                        if orig.mask().get(f, t) {
                            prop_assert_eq!(orig.values().get(f, t).to_bits(), new.values().get(f, t).to_bits());
                            prop_assert!(!imputed.get(f, t));
                        } else {
                            prop_assert!(imputed.get(f, t));
                        }
                    }
                }
            }
        }
        Ok(())
    })
}

/// A training journey used as its own query is at distance 0 from its
/// summary, so any nearest neighbour shares that summary exactly.
pub fn knn_self_neighbour() -> Outcome {
    check(CASES, (any::<u64>(), 2usize..10, 1usize..4, 0.0f64..0.7), |(seed, p, n, miss)| {
        let train = random_dataset(seed, p, n, 8, miss);
        let knn = KnnImputer::fit(&train, 1).unwrap();
        for (i, j) in train.journeys().iter().enumerate() {
            let (filled, imputed) = knn.impute_journey(j).unwrap();
            for f in 0..n {
                for t in 0..j.len() {
                    if imputed.get(f, t) {
                        prop_assert_eq!(filled.values().get(f, t).to_bits(), knn.summaries[i][f].to_bits());
                    }
                }
            }
        }
        Ok(())
    })
}

pub fn intervals_nonnegative() -> Outcome {
    check(CASES, (any::<u64>(), 1usize..8, 1usize..5, 0.0f64..0.95), |(seed, p, n, miss)| {
        let ds = random_dataset(seed, p, n, 12, miss);
        for j in ds.journeys() {
            let d = time_intervals(j);
            prop_assert!(d.as_slice().iter().all(|v| *v >= 0.0));
            for f in 0..n {
                prop_assert_eq!(d.get(f, 0), 0.0);
            }
        }
        Ok(())
    })
}

// training

fn small_cohort() -> Dataset {
    let cfg = GenConfig {
        n_patients: 160,
        t_min: 6,
        t_max: 14,
        seed: 5,
        ..GenConfig::default()
    };
    datagen::generate(&cfg).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 12,
        patience: 4,
        hidden: 6,
        batch_size: 16,
        lr: 1e-2,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn training_deterministic() -> Outcome {
    let ds = small_cohort();
    let (tr, va, _) = split_dataset(&ds, DEFAULT_RATIOS, 1).map_err(|e| e.to_string())?;
    let a = fit_model(&tr, &va, &small_config()).map_err(|e| e.to_string())?;
    let b = fit_model(&tr, &va, &small_config()).map_err(|e| e.to_string())?;
    ensure(a.checkpoint.to_json() == b.checkpoint.to_json(), || "checkpoints differ".into())?;
    ensure(a.history == b.history, || "histories differ".into())
}

/// The kept parameters score at least as well on validation as every
/// epoch, and re-scoring them reproduces the recorded value.
pub fn early_stop_keeps_best() -> Outcome {
    let ds = small_cohort();
    let (tr, va, _) = split_dataset(&ds, DEFAULT_RATIOS, 2).map_err(|e| e.to_string())?;
    let m = fit_model(&tr, &va, &small_config()).map_err(|e| e.to_string())?;
    let h = &m.history;
    let kept = h.epochs[h.best_epoch - 1].val_auprc.ok_or("validation AUPRC undefined")?;
    for e in &h.epochs {
        let v = e.val_auprc.ok_or("validation AUPRC undefined")?;
        ensure(v <= kept, || format!("epoch {} AUPRC {v} beats kept epoch {} ({kept})", e.epoch, h.best_epoch))?;
    }
    let again = evaluate_checkpoint(&m.checkpoint, &va).map_err(|e| e.to_string())?.auprc;
    ensure(again.to_bits() == kept.to_bits(), || format!("re-scored AUPRC {again} != recorded {kept}"))
}

/// The fitted statistics are the training split's; refitting with the test
/// split mixed in would change them.
pub fn no_test_leakage() -> Outcome {
    let ds = small_cohort();
    let cfg = TrainConfig { epochs: 1, ..small_config() };
    let run = run_once(&ds, &cfg, 7).map_err(|e| e.to_string())?;
    let (tr, _, te) = split_dataset(&ds, DEFAULT_RATIOS, 7).map_err(|e| e.to_string())?;
    let fitted = &run.model.checkpoint.preprocessor.normalizer;
    ensure(*fitted == Normalizer::fit(&tr, cfg.normalization), || "normalizer not fitted on train".into())?;
    let leaked = Normalizer::fit(&tr.concat(&te).map_err(|e| e.to_string())?, cfg.normalization);
    ensure(*fitted != leaked, || "train and train+test statistics coincide".into())
}

/// Every invariant check, by name.
pub fn all() -> Vec<(&'static str, fn() -> Outcome)> {
    vec![
        ("matmul associativity", matmul_associative),
        ("activations monotone", activations_monotone),
        ("rng reproducible", rng_reproducible),
        ("prepare keeps mask structure", prepare_keeps_mask_structure),
        ("split partitions by id", split_partitions),
        ("conv length and ReLU range", conv_length_and_range),
        ("conv depthwise and local", conv_depthwise_and_local),
        ("gru gate ranges and state bound", gru_gate_ranges_and_bound),
        ("gru convex combination", gru_convex_combination),
        ("gru deterministic", gru_deterministic),
        ("softmax normalized", softmax_normalized),
        ("loss non-negative", loss_nonnegative),
        ("batch gradient is mean", batch_gradient_is_mean),
        ("metrics monotone-transform invariant", auroc_monotone_invariant),
        ("auroc complement law", auroc_complement),
        ("auprc bounds", auprc_bounds),
        ("imputation keeps observed cells", imputation_keeps_observed),
        ("knn K=1 self neighbour", knn_self_neighbour),
        ("intervals non-negative", intervals_nonnegative),
        ("training deterministic", training_deterministic),
        ("early stopping keeps best epoch", early_stop_keeps_best),
        ("no test-split leakage", no_test_leakage),
    ]
}
