use causal_tree::criteria::{fit_value, adaptive_ct_value, split_gain, ts_split_stat, cv_value};
use causal_tree::data::split_sample;
use causal_tree::eval::{mse_tau_infeasible, mse_tot};
use causal_tree::honest::{estimate_leaves, EstimateSource};
use causal_tree::prune::{cost_complexity_sequence, fit_pruned, select_alpha, CvConfig};
use causal_tree::sim::{generate, DesignSpec};
use causal_tree::tree::{candidate_splits, grow_tree, leaf_stats, CandidateRule};
use causal_tree::{CausalDataset, CriterionSpec, Family, GrowParams, LeafStats, Tree, WeightingConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

/// `n` units, `k` standard normal covariates, effect `effect·1{x1 > 0}`.
fn random_data(seed: u64, n: usize, k: usize, effect: f64) -> CausalDataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let cols: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| normal(&mut r)).collect()).collect();
    let w: Vec<u8> = (0..n).map(|_| r.random_bool(0.5) as u8).collect();
    let y = (0..n)
        .map(|i| {
            let tau = if cols[0][i] > 0.0 { effect } else { 0.0 };
            cols[k - 1][i] + tau * w[i] as f64 + normal(&mut r)
        })
        .collect();
    CausalDataset::new(y, w, cols).unwrap().with_marginal_p(0.5).unwrap()
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn ct(honest: bool, n_est: usize) -> CriterionSpec {
    CriterionSpec::new(Family::CausalTree, honest, 0.5, n_est).unwrap()
}

/// Two leaves split at `x1 <= 0`, each with two arms of `m` units.
fn four_cells(seed: u64, m: usize, shift: f64, scale: f64) -> (LeafStats, LeafStats) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = 4 * m;
    let w: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let x: Vec<f64> = (0..n).map(|i| if (i / 2) % 2 == 0 { -1.0 } else { 1.0 }).collect();
    let y: Vec<f64> = (0..n).map(|i| shift + scale * (normal(&mut r) + 0.7 * x[i] * w[i] as f64)).collect();
    let d = CausalDataset::new(y, w, vec![x.clone()]).unwrap();
    let left: Vec<usize> = (0..n).filter(|&i| x[i] <= 0.0).collect();
    let right: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0).collect();
    (leaf_stats(&d, &left, None), leaf_stats(&d, &right, None))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ts_statistic_ignores_shift_and_scale(seed in 0u64..10_000, shift in -100.0f64..100.0, scale in 0.05f64..20.0, neg in any::<bool>()) {
        let c = if neg { -scale } else { scale };
        let (l, r) = four_cells(seed, 15, 0.0, 1.0);
        let (l2, r2) = four_cells(seed, 15, shift, c);
        let a = ts_split_stat(&l, &r).unwrap();
        let b = ts_split_stat(&l2, &r2).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn causal_split_choice_ignores_outcome_shift(seed in 0u64..10_000, shift in -50.0f64..50.0, honest in any::<bool>()) {
        let d = random_data(seed, 240, 3, 1.5);
        let y: Vec<f64> = d.outcomes().iter().map(|v| v + shift).collect();
        let cols = (0..3).map(|k| d.column(k).to_vec()).collect();
        let shifted = CausalDataset::new(y, d.treatments().to_vec(), cols).unwrap().with_marginal_p(0.5).unwrap();
        let params = GrowParams { n_min: 10, max_depth: Some(1), ..GrowParams::default() };
        let spec = ct(honest, 240);
        let a = grow_tree(&d, &all(240), &spec, &params).unwrap();
        let b = grow_tree(&shifted, &all(240), &spec, &params).unwrap();
        prop_assert_eq!(a.node(0).split.map(|s| (s.feature, s.threshold)), b.node(0).split.map(|s| (s.feature, s.threshold)));
    }

    #[test]
    fn leaves_respect_minimums(seed in 0u64..10_000, fam in 0usize..4, honest in any::<bool>()) {
        let family = [Family::CausalTree, Family::TransformedOutcome, Family::Fit, Family::TStatistic][fam];
        let d = random_data(seed, 400, 2, 2.0);
        let params = GrowParams { n_min: 15, ..GrowParams::default() };
        let spec = CriterionSpec::new(family, honest, 0.5, 400).unwrap();
        let t = grow_tree(&d, &all(400), &spec, &params).unwrap();
        t.check().unwrap();
        for leaf in t.leaves() {
            let s = t.node(leaf).stats;
            if family == Family::TransformedOutcome {
                prop_assert!(s.n() >= params.tot_min_leaf);
            } else {
                prop_assert!(s.n_treat() >= params.n_min && s.n_control() >= params.n_min);
            }
        }
    }

    #[test]
    fn consecutive_bucket_thresholds_move_both_arms(seed in 0u64..10_000, n in 60usize..400, b in 1usize..8, n_min in 2usize..20) {
        let d = random_data(seed, n, 1, 0.0);
        let idx = all(n);
        let t = candidate_splits(&d, &idx, 0, CandidateRule::Buckets { n_min, bucket_size: b });
        for pair in t.windows(2) {
            let moved = |arm: bool| idx.iter().filter(|&&i| d.is_treated(i) == arm && d.x(i, 0) > pair[0] && d.x(i, 0) <= pair[1]).count();
            prop_assert!(moved(true) >= 1 && moved(false) >= 1);
        }
        for &th in &t {
            let left = |arm: bool| idx.iter().filter(|&&i| d.is_treated(i) == arm && d.x(i, 0) <= th).count();
            let n_arm = |arm: bool| idx.iter().filter(|&&i| d.is_treated(i) == arm).count();
            for arm in [true, false] {
                prop_assert!(left(arm) >= n_min && n_arm(arm) - left(arm) >= n_min);
            }
        }
    }

    #[test]
    fn pruned_trees_are_nested(seed in 0u64..10_000) {
        let d = random_data(seed, 300, 2, 2.0);
        let spec = ct(false, 300);
        let t = grow_tree(&d, &all(300), &spec, &GrowParams { n_min: 8, ..GrowParams::default() }).unwrap();
        let seq = cost_complexity_sequence(&t, &spec).unwrap();
        let mut probes: Vec<Vec<f64>> = (0..300).map(|i| d.row(i)).collect();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        probes.extend((0..500).map(|_| vec![3.0 * normal(&mut r), 3.0 * normal(&mut r)]));
        let leaves = seq.entries.windows(2).all(|w| w[0].1.n_leaves() >= w[1].1.n_leaves());
        prop_assert!(leaves);
        for i in 0..seq.len() {
            for j in i + 1..seq.len() {
                let (fine, coarse) = (&seq.entries[i].1, &seq.entries[j].1);
                let mut map = std::collections::HashMap::new();
                for x in &probes {
                    let c = coarse.apply(x);
                    let prev = map.insert(fine.apply(x), c);
                    prop_assert!(prev.is_none() || prev == Some(c));
                }
            }
        }
        prop_assert_eq!(seq.entries[0].0, 0.0);
        prop_assert_eq!(seq.entries.last().unwrap().1.n_leaves(), 1);
    }

    #[test]
    fn every_point_reaches_exactly_one_leaf(seed in 0u64..10_000) {
        let d = random_data(seed, 300, 3, 2.0);
        let t = grow_tree(&d, &all(300), &ct(false, 300), &GrowParams { n_min: 8, ..GrowParams::default() }).unwrap();
        let regions: Vec<(usize, Vec<causal_tree::tree::Bound>)> = t.leaves().into_iter().map(|l| (l, t.region(l))).collect();
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| 2.0 * normal(&mut r)).collect();
            let inside: Vec<usize> = regions
                .iter()
                .filter(|(_, b)| b.iter().all(|b| x[b.feature] > b.lower && x[b.feature] <= b.upper))
                .map(|(l, _)| *l)
                .collect();
            prop_assert_eq!(inside, vec![t.apply(&x)]);
        }
    }

    #[test]
    fn constant_propensity_weighting_matches_unweighted(seed in 0u64..10_000, e in 0.1f64..0.9) {
        let d = random_data(seed, 400, 2, 1.0).with_propensity(vec![e; 400]).unwrap();
        let t = grow_tree(&d, &all(200), &ct(true, 200), &GrowParams { n_min: 10, ..GrowParams::default() }).unwrap();
        let est: Vec<usize> = (200..400).collect();
        let plain = estimate_leaves(&t, &d, &est, 0.9, None).unwrap();
        let w = WeightingConfig::default();
        let weighted = estimate_leaves(&t, &d, &est, 0.9, Some(&w)).unwrap();
        for (leaf, a) in &plain.leaves {
            match (a.estimate(), weighted.get(*leaf).and_then(|r| r.estimate())) {
                (Some(a), Some(b)) => {
                    prop_assert!((a.tau_hat - b.tau_hat).abs() <= 1e-12 * a.tau_hat.abs().max(1.0));
                    prop_assert!((a.se - b.se).abs() <= 1e-9 * a.se);
                }
                (None, None) => {}
                _ => prop_assert!(false, "availability differs in leaf {}", leaf),
            }
        }
    }

    #[test]
    fn honest_estimates_ignore_training_outcomes_and_row_order(seed in 0u64..10_000, changed in 0usize..200, delta in -100.0f64..100.0) {
        let d = random_data(seed, 400, 2, 2.0);
        let train = all(200);
        let est: Vec<usize> = (200..400).collect();
        let t = grow_tree(&d, &train, &ct(true, 200), &GrowParams { n_min: 10, ..GrowParams::default() }).unwrap();
        let base = estimate_leaves(&t, &d, &est, 0.9, None).unwrap();

        let mut y = d.outcomes().to_vec();
        y[changed] += delta;
        let cols = (0..2).map(|k| d.column(k).to_vec()).collect();
        let d2 = CausalDataset::new(y, d.treatments().to_vec(), cols).unwrap().with_marginal_p(0.5).unwrap();
        prop_assert_eq!(&estimate_leaves(&t, &d2, &est, 0.9, None).unwrap(), &base);

        let mut shuffled = est.clone();
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut r);
        let permuted = estimate_leaves(&t, &d, &shuffled, 0.9, None).unwrap();
        for (leaf, a) in &base.leaves {
            let (Some(a), Some(b)) = (a.estimate(), permuted.get(*leaf).and_then(|r| r.estimate())) else { continue };
            prop_assert!((a.tau_hat - b.tau_hat).abs() <= 1e-12 * a.tau_hat.abs().max(1.0));
        }
    }

    #[test]
    fn true_leaf_means_minimise_the_infeasible_mse(seed in 0u64..10_000, eps in 1e-3f64..0.5) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let n = 30;
        let x: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let tau: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let d = CausalDataset::new(vec![0.0; n], (0..n).map(|i| (i % 2) as u8).collect(), vec![x.clone()])
            .unwrap()
            .with_true_cate(tau.clone())
            .unwrap();
        let left: Vec<usize> = (0..n).filter(|&i| x[i] <= 0.0).collect();
        let right: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0).collect();
        let m = |s: &[usize]| if s.is_empty() { 0.0 } else { s.iter().map(|&i| tau[i]).sum::<f64>() / s.len() as f64 };
        let (ml, mr) = (m(&left), m(&right));
        let preds = |a: f64, b: f64| (0..n).map(|i| if x[i] <= 0.0 { a } else { b }).collect::<Vec<_>>();
        let best = mse_tau_infeasible(&d, &all(n), &preds(ml, mr)).unwrap();
        for (da, db) in [(eps, 0.0), (-eps, 0.0), (0.0, eps), (0.0, -eps), (eps, eps), (-eps, eps)] {
            let v = mse_tau_infeasible(&d, &all(n), &preds(ml + da, mr + db)).unwrap();
            prop_assert!(v >= best - 1e-12);
        }
    }
}

#[test]
fn split_sample_is_disjoint_and_deterministic_for_small_n() {
    for n in 2..=12usize {
        for pattern in 0u32..(1 << n) {
            let w: Vec<u8> = (0..n).map(|i| ((pattern >> i) & 1) as u8).collect();
            let Ok(d) = CausalDataset::new(vec![0.0; n], w, vec![vec![0.0; n]]) else { continue };
            let Ok(d) = d.with_marginal_p(0.5) else { continue };
            for fr in [(0.5, 0.5, 0.0), (1.0, 0.0, 0.0), (0.4, 0.3, 0.3)] {
                let a = split_sample(&d, fr, 3);
                let b = split_sample(&d, fr, 3);
                assert_eq!(a.is_ok(), b.is_ok());
                let (Ok(a), Ok(b)) = (a, b) else { continue };
                assert_eq!(a, b);
                let mut seen = vec![false; n];
                for set in [&a.train, &a.est, &a.test] {
                    for &i in set.iter() {
                        assert!(i < n && !seen[i]);
                        seen[i] = true;
                    }
                    if !set.is_empty() {
                        assert!(d.count_treated(set) >= 1 && d.count_treated(set) < set.len());
                    }
                }
            }
        }
    }
}

#[test]
fn select_alpha_is_deterministic() {
    let d = random_data(17, 500, 3, 1.5);
    let spec = ct(true, 500);
    let cv = CvConfig::for_spec(&spec, 99);
    let a = select_alpha(&d, &all(500), &spec, &GrowParams::default(), &cv).unwrap();
    let b = select_alpha(&d, &all(500), &spec, &GrowParams::default(), &cv).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn honest_intervals_cover_at_a_fixed_partition() {
    // Four leaves split on the signs of x1 and x2 under design 1, where the
    // effect is x1/2, so the leaf effects are ±E[x1 | x1 > 0]/2 = ±1/√(2π).
    let mut t = Tree::single_leaf(LeafStats::default());
    let (l, r) = t.split_leaf(0, 0, 0.0, LeafStats::default(), LeafStats::default()).unwrap();
    t.split_leaf(l, 1, 0.0, LeafStats::default(), LeafStats::default()).unwrap();
    t.split_leaf(r, 1, 0.0, LeafStats::default(), LeafStats::default()).unwrap();
    let tau_pos = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let design = DesignSpec::new(1).unwrap();
    let (mut hits, mut total) = (0usize, 0usize);
    for s in 0..2000u64 {
        let d = generate(&design, 1000, 1_000_000 + s).unwrap();
        let est = estimate_leaves(&t, &d, &all(1000), 0.9, None).unwrap();
        for leaf in t.leaves() {
            let e = est.get(leaf).and_then(|r| r.estimate()).expect("leaf has support");
            let x1_positive = t.region(leaf).iter().any(|b| b.feature == 0 && b.lower == 0.0);
            let target = if x1_positive { tau_pos } else { -tau_pos };
            hits += e.covers(target) as usize;
            total += 1;
        }
    }
    let rate = hits as f64 / total as f64;
    assert!((0.88..=0.92).contains(&rate), "coverage {rate}");
}

#[test]
fn adaptive_cross_sample_value_is_unbiased() {
    let design = DesignSpec::new(1).unwrap();
    let train = generate(&design, 500, 42).unwrap();
    let mut t = Tree::single_leaf(LeafStats::default());
    t.split_leaf(0, 0, 0.0, LeafStats::default(), LeafStats::default()).unwrap();
    let t = t.refit(&train, &all(500));
    let spec = ct(false, 500);
    let tau_hat: Vec<f64> = t.leaves().iter().map(|&l| {
        let s = t.node(l).stats;
        s.mean_treat().unwrap() - s.mean_control().unwrap()
    }).collect();
    let leaf_pos = t.leaves();
    let reps = 2000;
    let mut diffs = Vec::with_capacity(reps);
    for s in 0..reps as u64 {
        let test = generate(&design, 500, 5_000_000 + s).unwrap();
        let idx = all(500);
        let cv = cv_value(&spec, &t, &test, &idx).unwrap();
        let preds: Vec<f64> = idx.iter().map(|&i| {
            let leaf = t.apply_row(&test, i);
            tau_hat[leaf_pos.iter().position(|&l| l == leaf).unwrap()]
        }).collect();
        let infeasible = -mse_tau_infeasible(&test, &idx, &preds).unwrap();
        diffs.push(cv - infeasible);
    }
    let (m, se) = mean_se(&diffs);
    assert!(m.abs() <= 4.0 * se, "bias {m} with se {se}");
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn tot_mse_gap_does_not_depend_on_the_predictor() {
    let design = DesignSpec::new(1).unwrap();
    let predictors: [fn(&[f64]) -> f64; 3] = [|_| 0.0, |x| 0.4 * x[0], |x| if x[0] > 0.0 { 0.4 } else { -0.4 }];
    let mut gaps = vec![Vec::new(); 3];
    for s in 0..500u64 {
        let d = generate(&design, 2000, 9_000_000 + s).unwrap();
        let idx = all(2000);
        for (k, f) in predictors.iter().enumerate() {
            let p: Vec<f64> = idx.iter().map(|&i| f(&d.row(i))).collect();
            gaps[k].push(mse_tot(&d, &idx, &p).unwrap() - mse_tau_infeasible(&d, &idx, &p).unwrap());
        }
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        let diff: Vec<f64> = gaps[a].iter().zip(&gaps[b]).map(|(x, y)| x - y).collect();
        let (m, se) = mean_se(&diff);
        assert!(m.abs() <= 4.0 * se, "predictors {a},{b}: {m} ± {se}");
    }
}

#[test]
fn weighting_removes_confounding_bias() {
    // e(x) = 0.2 + 0.6x with x uniform, Y = 2x + W + noise: treated units have
    // larger x, so the raw difference is biased upwards by 2·(E[x|W=1] − E[x|W=0]) = 0.2.
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000;
    let x: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
    let e: Vec<f64> = x.iter().map(|v| 0.2 + 0.6 * v).collect();
    let w: Vec<u8> = e.iter().map(|&p| r.random_bool(p) as u8).collect();
    let y: Vec<f64> = (0..n).map(|i| 2.0 * x[i] + w[i] as f64 + normal(&mut r)).collect();
    let d = CausalDataset::new(y, w, vec![x]).unwrap().with_propensity(e).unwrap();
    let t = Tree::single_leaf(LeafStats::default());
    let cfg = WeightingConfig::default();
    let weighted = estimate_leaves(&t, &d, &all(n), 0.9, Some(&cfg)).unwrap();
    let plain = estimate_leaves(&t, &d, &all(n), 0.9, None).unwrap();
    let ew = weighted.get(0).unwrap().estimate().unwrap();
    let ep = plain.get(0).unwrap().estimate().unwrap();
    assert_eq!(ew.source, EstimateSource::Honest);
    assert!((ew.tau_hat - 1.0).abs() <= 3.0 * ew.se, "weighted {} se {}", ew.tau_hat, ew.se);
    assert!(ep.tau_hat - 1.0 > 5.0 * ep.se, "unweighted {} se {}", ep.tau_hat, ep.se);
}

#[test]
fn fit_criterion_rewards_splits_on_mean_only_covariates() {
    let d = generate(&DesignSpec::new(2).unwrap(), 100_000, 77).unwrap();
    let n = d.len();
    let left: Vec<usize> = (0..n).filter(|&i| d.x(i, 2) <= 0.0).collect();
    let right: Vec<usize> = (0..n).filter(|&i| d.x(i, 2) > 0.0).collect();
    let root = [leaf_stats(&d, &all(n), None)];
    let split = [leaf_stats(&d, &left, None), leaf_stats(&d, &right, None)];
    let fit_gain = fit_value(&split, false, n, n).unwrap() - fit_value(&root, false, n, n).unwrap();
    let ct_gain = adaptive_ct_value(&split, n).unwrap() - adaptive_ct_value(&root, n).unwrap();
    // x3 shifts both arms by ±E|x3| = ±0.80, so the fit value rises by about 0.64.
    assert!(fit_gain > 0.5, "fit gain {fit_gain}");
    assert!(ct_gain.abs() < 0.01, "causal gain {ct_gain}");
}

#[test]
fn variance_penalty_makes_a_fixed_noise_split_unattractive() {
    // For a split chosen without looking at the outcomes, the honest gain has
    // negative expectation on pure noise while the adaptive gain is positive.
    let (mut honest, mut adaptive) = (Vec::new(), Vec::new());
    for s in 0..400u64 {
        let mut r = ChaCha8Rng::seed_from_u64(s);
        let n = 500;
        let y: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let w: Vec<u8> = (0..n).map(|_| r.random_bool(0.5) as u8).collect();
        let x: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let d = CausalDataset::new(y, w, vec![x.clone()]).unwrap().with_marginal_p(0.5).unwrap();
        let left: Vec<usize> = (0..n).filter(|&i| x[i] <= 0.0).collect();
        let right: Vec<usize> = (0..n).filter(|&i| x[i] > 0.0).collect();
        let (p, l, rr) = (leaf_stats(&d, &all(n), None), leaf_stats(&d, &left, None), leaf_stats(&d, &right, None));
        honest.push(split_gain(&ct(true, n), &p, &l, &rr, n).unwrap());
        adaptive.push(split_gain(&ct(false, n), &p, &l, &rr, n).unwrap());
    }
    let (mh, seh) = mean_se(&honest);
    let (ma, sea) = mean_se(&adaptive);
    assert!(mh + 4.0 * seh < 0.0, "honest mean gain {mh} ± {seh}");
    assert!(ma - 4.0 * sea > 0.0, "adaptive mean gain {ma} ± {sea}");
}

#[test]
fn pure_noise_is_pruned_to_at_most_two_leaves() {
    let spec = ct(true, 500);
    let mut small = 0;
    for s in 0..200u64 {
        let mut r = ChaCha8Rng::seed_from_u64(s);
        let n = 500;
        let y: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
        let w: Vec<u8> = (0..n).map(|_| r.random_bool(0.5) as u8).collect();
        let cols: Vec<Vec<f64>> = (0..2).map(|_| (0..n).map(|_| normal(&mut r)).collect()).collect();
        let d = CausalDataset::new(y, w, cols).unwrap().with_marginal_p(0.5).unwrap();
        let f = fit_pruned(&d, &all(n), &spec, &GrowParams::default(), &CvConfig::for_spec(&spec, s)).unwrap();
        small += (f.tree.n_leaves() <= 2) as usize;
    }
    let share = small as f64 / 200.0;
    println!("pure noise: {small}/200 pruned trees have at most two leaves");
    assert!(share >= 0.8, "only {share} of pure-noise fits pruned to <= 2 leaves");
}
