//! Evaluation harness: referencing metrics, user-based k-fold
//! cross-validation, modality ablations and per-user reports.

use crate::frames::SampleTensor;
use crate::fusion::{train, FusionError, FusionModel, NetworkConfig, TrainConfig};
use crate::matching::{rank_rois, MatchError};
use crate::synth::{Scenario, SynthError};
use nalgebra::Vector3;
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("length mismatch: {0} predictions vs {1} references")]
    LengthMismatch(usize, usize),
    #[error("prediction {0} has near-zero norm")]
    ZeroVector(usize),
    #[error("{needed} users required for a {k}-fold user split, got {got}")]
    TooFewUsers { needed: usize, got: usize, k: usize },
    #[error("sample without metadata cannot enter a user split")]
    MissingMeta,
    #[error("user {0} leaks between folds")]
    FoldLeak(String),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Fraction of predictions equal to the reference id.
pub fn accuracy(pred: &[u32], truth: &[u32]) -> Result<f64, EvalError> {
    if pred.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Fraction of references found within the first two ranked candidates.
pub fn top2_accuracy(rankings: &[Vec<u32>], truth: &[u32]) -> Result<f64, EvalError> {
    if rankings.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if rankings.len() != truth.len() {
        return Err(EvalError::LengthMismatch(rankings.len(), truth.len()));
    }
    let hits = rankings
        .iter()
        .zip(truth)
        .filter(|(r, t)| r.iter().take(2).any(|id| id == *t))
        .count();
    Ok(hits as f64 / rankings.len() as f64)
}

/// Mean and population standard deviation of the angular deviation
/// between prediction and reference rows, in degrees.
pub fn mad_metric(pred: &Array2<f64>, truth: &Array2<f64>) -> Result<(f64, f64), EvalError> {
    if pred.nrows() == 0 {
        return Err(EvalError::EmptyInput);
    }
    if pred.nrows() != truth.nrows() {
        return Err(EvalError::LengthMismatch(pred.nrows(), truth.nrows()));
    }
    let mut angles = Vec::with_capacity(pred.nrows());
    for i in 0..pred.nrows() {
        let p = Vector3::new(pred[[i, 0]], pred[[i, 1]], pred[[i, 2]]);
        let t = Vector3::new(truth[[i, 0]], truth[[i, 1]], truth[[i, 2]]);
        let (np, nt) = (p.norm(), t.norm());
        if np <= 1e-12 || nt <= 1e-12 {
            return Err(EvalError::ZeroVector(i));
        }
        let c = (p.dot(&t) / (np * nt)).clamp(-1.0, 1.0);
        angles.push(c.acos().to_degrees());
    }
    let n = angles.len() as f64;
    let mean = angles.iter().sum::<f64>() / n;
    let var = angles.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Ordinary least squares fit `y = slope * x + intercept` with the
/// coefficient of determination. Returns `None` when x is degenerate.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 1e-12 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let r2 = if syy <= 1e-12 {
        1.0
    } else {
        (sxy * sxy) / (sxx * syy)
    };
    Some((slope, intercept, r2))
}

// ---------------------------------------------------------------------------
// User-based splits
// ---------------------------------------------------------------------------

/// One cross-validation fold: disjoint user sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train_users: Vec<String>,
    pub val_users: Vec<String>,
    pub test_users: Vec<String>,
}

/// Splits users into `k` contiguous folds after a seeded shuffle. Fold
/// `i` is the test set, fold `i + 1` (cyclically) the validation set,
/// the remainder trains. With 28 users and k = 5 the fold sizes are
/// 6, 6, 6, 5, 5.
pub fn make_kfold_splits(
    users: &[String],
    k: usize,
    seed: u64,
) -> Result<Vec<SplitPlan>, EvalError> {
    let unique: BTreeSet<&String> = users.iter().collect();
    let mut shuffled: Vec<String> = unique.into_iter().cloned().collect();
    let n = shuffled.len();
    if k < 3 || n < k {
        return Err(EvalError::TooFewUsers {
            needed: k.max(3),
            got: n,
            k,
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xf01d_f01d);
    shuffled.shuffle(&mut rng);

    let base = n / k;
    let rem = n % k;
    let mut folds: Vec<Vec<String>> = Vec::with_capacity(k);
    let mut at = 0usize;
    for i in 0..k {
        let len = base + usize::from(i < rem);
        folds.push(shuffled[at..at + len].to_vec());
        at += len;
    }

    let mut plans = Vec::with_capacity(k);
    for i in 0..k {
        let test_users = folds[i].clone();
        let val_users = folds[(i + 1) % k].clone();
        let train_users: Vec<String> = (0..k)
            .filter(|&j| j != i && j != (i + 1) % k)
            .flat_map(|j| folds[j].iter().cloned())
            .collect();
        plans.push(SplitPlan {
            train_users,
            val_users,
            test_users,
        });
    }
    Ok(plans)
}

fn users_of(samples: &[&SampleTensor]) -> Result<Vec<String>, EvalError> {
    samples
        .iter()
        .map(|s| {
            s.meta
                .as_ref()
                .map(|m| m.user_id.clone())
                .ok_or(EvalError::MissingMeta)
        })
        .collect()
}

fn select<'a>(samples: &[&'a SampleTensor], users: &[String]) -> Vec<&'a SampleTensor> {
    let set: BTreeSet<&str> = users.iter().map(|u| u.as_str()).collect();
    samples
        .iter()
        .filter(|s| {
            s.meta
                .as_ref()
                .is_some_and(|m| set.contains(m.user_id.as_str()))
        })
        .copied()
        .collect()
}

fn assert_disjoint(plan: &SplitPlan) -> Result<(), EvalError> {
    let mut seen = BTreeSet::new();
    for u in plan
        .train_users
        .iter()
        .chain(&plan.val_users)
        .chain(&plan.test_users)
    {
        if !seen.insert(u.as_str()) {
            return Err(EvalError::FoldLeak(u.clone()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Model evaluation against the ROI map
// ---------------------------------------------------------------------------

/// Per-sample outcome of one evaluated model.
#[derive(Debug, Clone)]
pub struct SampleEval {
    pub user_id: String,
    pub pose_id: u32,
    pub roi_id: u32,
    pub chosen: u32,
    pub ranking: Vec<u32>,
    pub error_deg: f64,
}

impl SampleEval {
    pub fn correct(&self) -> bool {
        self.chosen == self.roi_id
    }

    pub fn top2(&self) -> bool {
        self.ranking.iter().take(2).any(|&id| id == self.roi_id)
    }
}

/// Runs a trained model over labeled samples and matches every
/// prediction against the scenario's ROI map.
pub fn evaluate_model(
    model: &FusionModel,
    scenario: &Scenario,
    samples: &[&SampleTensor],
) -> Result<Vec<SampleEval>, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let refs: Vec<&Array3<f64>> = samples.iter().map(|s| &s.values).collect();
    let preds = model.forward_batch(&refs)?;
    let roi_map = scenario.roi_map();

    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let meta = s.meta.as_ref().ok_or(EvalError::MissingMeta)?;
        let label = s.label.ok_or(EvalError::EmptyInput)?;
        let p = Vector3::new(preds[[i, 0]], preds[[i, 1]], preds[[i, 2]]);
        if p.norm() <= 1e-12 {
            return Err(EvalError::ZeroVector(i));
        }
        let pose = scenario.pose(meta.pose_id)?;
        let ranking = rank_rois(&p, &roi_map, &pose.transform)?;
        let c = (p.dot(&label.as_vector()) / p.norm()).clamp(-1.0, 1.0);
        out.push(SampleEval {
            user_id: meta.user_id.clone(),
            pose_id: meta.pose_id,
            roi_id: meta.roi_id,
            chosen: ranking[0].roi_id,
            ranking: ranking.iter().map(|r| r.roi_id).collect(),
            error_deg: c.acos().to_degrees(),
        });
    }
    Ok(out)
}

fn summarize(label: &str, evals: &[SampleEval]) -> Result<MetricRow, EvalError> {
    if evals.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = evals.len() as f64;
    let acc = evals.iter().filter(|e| e.correct()).count() as f64 / n;
    let top2 = evals.iter().filter(|e| e.top2()).count() as f64 / n;
    let mean = evals.iter().map(|e| e.error_deg).sum::<f64>() / n;
    let var = evals
        .iter()
        .map(|e| (e.error_deg - mean) * (e.error_deg - mean))
        .sum::<f64>()
        / n;
    Ok(MetricRow {
        label: label.to_string(),
        accuracy: acc,
        top2,
        mad_deg: mean,
        std_deg: var.sqrt(),
        n: evals.len(),
    })
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

/// Which modality branches a trained model sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalitySubset {
    Head,
    Gaze,
    Finger,
    Fusion,
}

impl ModalitySubset {
    pub const ALL: [Self; 4] = [Self::Head, Self::Gaze, Self::Finger, Self::Fusion];

    /// Active branches in tensor order: finger, eye, head.
    pub fn active(self) -> [bool; 3] {
        match self {
            Self::Head => [false, false, true],
            Self::Gaze => [false, true, false],
            Self::Finger => [true, false, false],
            Self::Fusion => [true, true, true],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Head => "head",
            Self::Gaze => "gaze",
            Self::Finger => "finger",
            Self::Fusion => "fusion",
        }
    }
}

/// One line of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub label: String,
    pub accuracy: f64,
    pub top2: f64,
    pub mad_deg: f64,
    pub std_deg: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,accuracy,top2,mad_deg,std_deg,n\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.4},{:.4},{}\n",
                r.label, r.accuracy, r.top2, r.mad_deg, r.std_deg, r.n
            ));
        }
        out
    }

    pub fn row(&self, label: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>9} {:>9} {:>10} {:>10} {:>6}",
            "subset", "acc", "top-2", "MAD [deg]", "Std [deg]", "n"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<16} {:>8.1}% {:>8.1}% {:>10.2} {:>10.2} {:>6}",
                r.label,
                100.0 * r.accuracy,
                100.0 * r.top2,
                r.mad_deg,
                r.std_deg,
                r.n
            )?;
        }
        Ok(())
    }
}

/// Trains and evaluates every modality subset under user-based k-fold
/// cross-validation. With `pool_events` the metrics pool all test
/// events; otherwise fold metrics are averaged unweighted.
#[allow(clippy::too_many_arguments)]
pub fn run_ablation(
    scenario: &Scenario,
    samples: &[&SampleTensor],
    subsets: &[ModalitySubset],
    k: usize,
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
    pool_events: bool,
) -> Result<EvalReport, EvalError> {
    let users = users_of(samples)?;
    let plans = make_kfold_splits(&users, k, train_cfg.seed)?;
    let mut rows = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let cfg = net_cfg.clone().with_modalities(subset.active());
        let mut fold_rows: Vec<MetricRow> = Vec::with_capacity(plans.len());
        let mut pooled: Vec<SampleEval> = Vec::new();
        for plan in &plans {
            assert_disjoint(plan)?;
            let tr = select(samples, &plan.train_users);
            let va = select(samples, &plan.val_users);
            let te = select(samples, &plan.test_users);
            let (model, _) = train(&tr, &va, &cfg, train_cfg)?;
            let evals = evaluate_model(&model, scenario, &te)?;
            if pool_events {
                pooled.extend(evals);
            } else {
                fold_rows.push(summarize(subset.label(), &evals)?);
            }
        }
        let row = if pool_events {
            summarize(subset.label(), &pooled)?
        } else {
            let kf = fold_rows.len() as f64;
            MetricRow {
                label: subset.label().to_string(),
                accuracy: fold_rows.iter().map(|r| r.accuracy).sum::<f64>() / kf,
                top2: fold_rows.iter().map(|r| r.top2).sum::<f64>() / kf,
                mad_deg: fold_rows.iter().map(|r| r.mad_deg).sum::<f64>() / kf,
                std_deg: fold_rows.iter().map(|r| r.std_deg).sum::<f64>() / kf,
                n: fold_rows.iter().map(|r| r.n).sum(),
            }
        };
        rows.push(row);
    }
    Ok(EvalReport { rows })
}

// ---------------------------------------------------------------------------
// Per-user report
// ---------------------------------------------------------------------------

/// Per-pose linear trend of the angular error over target distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionLine {
    pub pose_id: u32,
    pub slope_deg_per_m: f64,
    pub intercept_deg: f64,
    pub r2: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserReport {
    /// One row per held-out user plus a pooled `all` row.
    pub rows: Vec<MetricRow>,
    pub regressions: Vec<RegressionLine>,
}

/// Leave-one-user-out evaluation of the full fusion network, with a
/// per-pose regression of the angular error against target distance.
pub fn per_user_report(
    scenario: &Scenario,
    samples: &[&SampleTensor],
    net_cfg: &NetworkConfig,
    train_cfg: &TrainConfig,
) -> Result<UserReport, EvalError> {
    let users = users_of(samples)?;
    let n_users = users.iter().collect::<BTreeSet<_>>().len();
    let plans = make_kfold_splits(&users, n_users, train_cfg.seed)?;

    let mut rows = Vec::with_capacity(plans.len() + 1);
    let mut pooled: Vec<SampleEval> = Vec::new();
    for plan in &plans {
        assert_disjoint(plan)?;
        let tr = select(samples, &plan.train_users);
        let va = select(samples, &plan.val_users);
        let te = select(samples, &plan.test_users);
        let (model, _) = train(&tr, &va, net_cfg, train_cfg)?;
        let evals = evaluate_model(&model, scenario, &te)?;
        rows.push(summarize(&plan.test_users.join("+"), &evals)?);
        pooled.extend(evals);
    }
    rows.sort_by(|a, b| a.label.cmp(&b.label));
    rows.push(summarize("all", &pooled)?);

    let mut by_pose: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for e in &pooled {
        let d = scenario.roi_distance(e.pose_id, e.roi_id)?;
        let entry = by_pose.entry(e.pose_id).or_default();
        entry.0.push(d);
        entry.1.push(e.error_deg);
    }
    let mut regressions = Vec::new();
    for (pose_id, (xs, ys)) in by_pose {
        if let Some((slope, intercept, r2)) = linear_regression(&xs, &ys) {
            regressions.push(RegressionLine {
                pose_id,
                slope_deg_per_m: slope,
                intercept_deg: intercept,
                r2,
                n: xs.len(),
            });
        }
    }
    Ok(UserReport { rows, regressions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{build_default_scenario, build_samples, generate_corpus, load_corpus, CorpusConfig};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use tempfile::tempdir;

    #[test]
    fn accuracy_and_top2_basics() {
        let pred = vec![1, 2, 3, 4];
        let truth = vec![1, 2, 0, 4];
        assert_abs_diff_eq!(accuracy(&pred, &truth).unwrap(), 0.75);
        let rankings = vec![vec![1, 2], vec![9, 2], vec![3, 0], vec![5, 6]];
        assert_abs_diff_eq!(top2_accuracy(&rankings, &truth).unwrap(), 0.75);
        assert!(matches!(accuracy(&[], &[]), Err(EvalError::EmptyInput)));
        assert!(matches!(
            accuracy(&[1], &[1, 2]),
            Err(EvalError::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn mad_metric_hand_computed() {
        // 90 and 0 degrees: mean 45, population sd 45.
        let pred = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let truth = array![[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let (mean, sd) = mad_metric(&pred, &truth).unwrap();
        assert_abs_diff_eq!(mean, 45.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sd, 45.0, epsilon = 1e-12);
        // Scale invariance of the angle.
        let pred2 = array![[10.0, 0.0, 0.0], [0.0, 3.0, 0.0]];
        let (mean2, _) = mad_metric(&pred2, &truth).unwrap();
        assert_abs_diff_eq!(mean, mean2, epsilon = 1e-12);
    }

    #[test]
    fn mad_metric_rejects_zero_rows() {
        let pred = array![[0.0, 0.0, 0.0]];
        let truth = array![[1.0, 0.0, 0.0]];
        assert!(matches!(
            mad_metric(&pred, &truth),
            Err(EvalError::ZeroVector(0))
        ));
    }

    #[test]
    fn regression_recovers_exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let (slope, intercept, r2) = linear_regression(&xs, &ys).unwrap();
        assert_abs_diff_eq!(slope, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(intercept, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r2, 1.0, epsilon = 1e-12);
    }

    /// Oracle: solve the 2x2 normal equations directly.
    #[test]
    fn regression_matches_normal_equations() {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        let xs: Vec<f64> = (0..40).map(|_| rng.random_range(5.0..30.0)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 0.8 * x + 3.0 + rng.random_range(-2.0..2.0))
            .collect();
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let det = n * sxx - sx * sx;
        let slope_o = (n * sxy - sx * sy) / det;
        let intercept_o = (sxx * sy - sx * sxy) / det;
        let (slope, intercept, r2) = linear_regression(&xs, &ys).unwrap();
        assert_abs_diff_eq!(slope, slope_o, epsilon = 1e-9);
        assert_abs_diff_eq!(intercept, intercept_o, epsilon = 1e-9);
        assert!(r2 > 0.8 && r2 <= 1.0);
    }

    #[test]
    fn regression_degenerate_x_is_none() {
        assert!(linear_regression(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
        assert!(linear_regression(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn kfold_28_users_5_folds() {
        let users: Vec<String> = (0..28).map(|i| format!("u{i:02}")).collect();
        let plans = make_kfold_splits(&users, 5, 3).unwrap();
        assert_eq!(plans.len(), 5);
        let mut sizes: Vec<usize> = plans.iter().map(|p| p.test_users.len()).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![5, 5, 6, 6, 6]);
        // Every user is tested exactly once.
        let mut tested: Vec<&String> = plans.iter().flat_map(|p| &p.test_users).collect();
        tested.sort();
        tested.dedup();
        assert_eq!(tested.len(), 28);
        for p in &plans {
            assert_disjoint(p).unwrap();
            assert_eq!(
                p.train_users.len() + p.val_users.len() + p.test_users.len(),
                28
            );
        }
        // Deterministic under the seed.
        assert_eq!(plans, make_kfold_splits(&users, 5, 3).unwrap());
        assert_ne!(plans, make_kfold_splits(&users, 5, 4).unwrap());
    }

    #[test]
    fn kfold_too_few_users() {
        let users: Vec<String> = (0..2).map(|i| format!("u{i}")).collect();
        assert!(matches!(
            make_kfold_splits(&users, 3, 0),
            Err(EvalError::TooFewUsers { .. })
        ));
        let users: Vec<String> = (0..5).map(|i| format!("u{i}")).collect();
        assert!(matches!(
            make_kfold_splits(&users, 2, 0),
            Err(EvalError::TooFewUsers { .. })
        ));
    }

    #[test]
    fn ablation_and_user_report_on_tiny_corpus() {
        let dir = tempdir().unwrap();
        let cfg = CorpusConfig {
            n_users: 4,
            events_per_user: 8,
            seed: 5,
            poses: vec![1, 2, 3],
            poi_fraction: 0.0,
            noiseless: true,
            occlusion: false,
        };
        generate_corpus(&build_default_scenario(), &cfg, dir.path()).unwrap();
        let (scenario, events) = load_corpus(dir.path()).unwrap();
        let samples = build_samples(&scenario, &events).unwrap();
        let refs: Vec<&SampleTensor> = samples.iter().collect();

        let net_cfg = NetworkConfig::default().with_feature_maps(6);
        let train_cfg = TrainConfig {
            epochs: 2,
            seed: 5,
            ..TrainConfig::default()
        };
        let report = run_ablation(
            &scenario,
            &refs,
            &[ModalitySubset::Gaze, ModalitySubset::Fusion],
            3,
            &net_cfg,
            &train_cfg,
            false,
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        for r in &report.rows {
            assert!((0.0..=1.0).contains(&r.accuracy));
            assert!(r.top2 >= r.accuracy);
            assert!(r.mad_deg >= 0.0);
        }
        assert!(report.row("fusion").is_some());
        let csv = report.to_csv();
        assert!(csv.starts_with("label,accuracy"));
        assert_eq!(csv.lines().count(), 3);

        let user_report = per_user_report(&scenario, &refs, &net_cfg, &train_cfg).unwrap();
        // 4 held-out users plus the pooled row.
        assert_eq!(user_report.rows.len(), 5);
        assert_eq!(user_report.rows.last().unwrap().label, "all");
        assert!(!user_report.regressions.is_empty());
        for reg in &user_report.regressions {
            assert!(reg.r2 >= -1e-9 && reg.r2 <= 1.0 + 1e-9);
        }
    }
}
