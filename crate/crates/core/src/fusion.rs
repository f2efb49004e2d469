//! Linear logistic-regression score fusion.
//!
//! Given `N` comparators with scores `s_1..s_N` for a trial, the fused score is
//! `f = a_0 + a_1 z_1 + ... + a_N z_N`, where `z_i` is `s_i` z-normalized with
//! training-set statistics. The weights maximize the binomial log-likelihood of
//! the genuine/impostor labels under `sigmoid(f)` with a small ridge penalty on
//! `a_1..a_N`, solved by Newton's method (IRLS) with step halving.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ScoreEntry, ScoreSet};

pub const RIDGE: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 1000;
const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub mean: f64,
    pub std: f64,
}

impl ScoreStats {
    pub const IDENTITY: ScoreStats = ScoreStats {
        mean: 0.0,
        std: 1.0,
    };

    fn of(values: &[f64]) -> ScoreStats {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        ScoreStats {
            mean,
            std: var.sqrt(),
        }
    }

    #[inline]
    pub fn normalize(&self, s: f64) -> f64 {
        (s - self.mean) / self.std
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Fold the model was trained on, for cross-validated models.
    pub fold: Option<u8>,
    pub iterations: usize,
    /// Final (unpenalized) log-likelihood on the training trials.
    pub log_likelihood: f64,
    pub trials: usize,
    /// Comparators whose training scores were constant; their weight is 0.
    #[serde(default)]
    pub dropped: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub comparator_ids: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub stats: Vec<ScoreStats>,
    pub training: TrainingMeta,
}

impl FusionModel {
    /// Fused score `a_0 + sum(a_i * z_i)` for one trial, scores in
    /// `comparator_ids` order.
    pub fn apply(&self, scores: &[f64]) -> Result<f64> {
        if scores.len() != self.weights.len() {
            return Err(Error::invalid(format!(
                "fusion model expects {} scores, got {}",
                self.weights.len(),
                scores.len()
            )));
        }
        Ok(self.bias
            + scores
                .iter()
                .zip(&self.weights)
                .zip(&self.stats)
                .map(|((&s, &w), st)| w * st.normalize(s))
                .sum::<f64>())
    }

    /// Unpenalized log-likelihood of the labels of aligned score sets.
    pub fn log_likelihood(&self, sets: &[ScoreSet]) -> Result<f64> {
        let (rows, labels) = aligned_rows(sets)?;
        let mut ll = 0.0;
        for (row, &y) in rows.iter().zip(&labels) {
            ll += log_lik_term(self.apply(row)?, y);
        }
        Ok(ll)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<FusionModel> {
        let m: FusionModel = serde_json::from_str(s)?;
        if m.weights.len() != m.comparator_ids.len() || m.stats.len() != m.comparator_ids.len() {
            return Err(Error::Format("fusion model arity mismatch".into()));
        }
        if m.stats
            .iter()
            .any(|s| !(s.mean.is_finite() && s.std.is_finite() && s.std > 0.0))
        {
            return Err(Error::Format("fusion model has invalid statistics".into()));
        }
        Ok(m)
    }
}

pub fn apply_fusion(model: &FusionModel, scores: &[f64]) -> Result<f64> {
    model.apply(scores)
}

/// `log(1 + exp(x))` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn log_lik_term(z: f64, genuine: bool) -> f64 {
    if genuine {
        -softplus(-z)
    } else {
        -softplus(z)
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Result of a ridge-penalized logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub bias: f64,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

fn objective(x: &[Vec<f64>], y: &[bool], theta: &DVector<f64>, ridge: f64) -> (f64, f64) {
    let d = theta.len() - 1;
    let mut ll = 0.0;
    for (row, &g) in x.iter().zip(y) {
        let z = theta[0] + (0..d).map(|j| theta[j + 1] * row[j]).sum::<f64>();
        ll += log_lik_term(z, g);
    }
    let penalty = 0.5 * ridge * theta.rows(1, d).norm_squared();
    (ll - penalty, ll)
}

/// Maximizes `sum log p(y | x) - ridge/2 * |w|^2` over bias and weights.
pub fn fit_logistic(x: &[Vec<f64>], y: &[bool], ridge: f64) -> Result<LogisticFit> {
    if x.len() != y.len() || x.is_empty() {
        return Err(Error::invalid(
            "logistic regression needs matching, non-empty rows",
        ));
    }
    if y.iter().all(|&g| g) || y.iter().all(|&g| !g) {
        return Err(Error::invalid("logistic regression needs both classes"));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::invalid("ragged design matrix"));
    }
    let p = d + 1;
    let mut theta = DVector::<f64>::zeros(p);
    let (mut obj, mut ll) = objective(x, y, &theta, ridge);
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        let mut aug = vec![1.0; p];
        for (row, &g) in x.iter().zip(y) {
            aug[1..].copy_from_slice(row);
            let z = theta[0] + (0..d).map(|j| theta[j + 1] * row[j]).sum::<f64>();
            let prob = sigmoid(z);
            let r = f64::from(u8::from(g)) - prob;
            let w = prob * (1.0 - prob);
            for a in 0..p {
                grad[a] += r * aug[a];
                for b in a..p {
                    hess[(a, b)] += w * aug[a] * aug[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        for j in 1..p {
            grad[j] -= ridge * theta[j];
            hess[(j, j)] += ridge;
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                // Saturated bias curvature; fall back to a lightly damped system.
                let damped = hess + DMatrix::identity(p, p) * 1e-10;
                damped.lu().solve(&grad).unwrap_or(grad.clone())
            }
        };

        let mut scale = 1.0;
        let mut improved = None;
        for _ in 0..60 {
            let cand = &theta + &step * scale;
            let (o, l) = objective(x, y, &cand, ridge);
            if o >= obj {
                improved = Some((cand, o, l));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, o, l)) = improved else { break };
        let gain = o - obj;
        theta = cand;
        obj = o;
        ll = l;
        if gain < TOLERANCE {
            break;
        }
    }
    Ok(LogisticFit {
        bias: theta[0],
        weights: theta.iter().skip(1).copied().collect(),
        iterations,
        log_likelihood: ll,
    })
}

/// Checks that all sets cover the same trials in the same order and returns
/// per-trial score rows plus genuine flags.
fn aligned_rows(sets: &[ScoreSet]) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    let first = sets
        .first()
        .ok_or_else(|| Error::invalid("fusion needs at least one comparator"))?;
    for s in &sets[1..] {
        if s.entries.len() != first.entries.len() {
            return Err(Error::invalid(format!(
                "comparator {} has {} trials, {} has {}",
                s.comparator_id,
                s.entries.len(),
                first.comparator_id,
                first.entries.len()
            )));
        }
        for (i, (a, b)) in first.entries.iter().zip(&s.entries).enumerate() {
            if !same_trial(a, b) {
                return Err(Error::invalid(format!(
                    "trial {i} differs between {} and {}",
                    first.comparator_id, s.comparator_id
                )));
            }
        }
    }
    let rows = (0..first.entries.len())
        .map(|i| sets.iter().map(|s| s.entries[i].score).collect())
        .collect();
    let labels = first.entries.iter().map(|e| e.label.is_genuine()).collect();
    Ok((rows, labels))
}

fn same_trial(a: &ScoreEntry, b: &ScoreEntry) -> bool {
    a.enrol_id == b.enrol_id && a.probe_id == b.probe_id && a.label == b.label
}

fn train_rows(
    ids: Vec<String>,
    rows: &[Vec<f64>],
    labels: &[bool],
    fold: Option<u8>,
) -> Result<FusionModel> {
    let n = ids.len();
    let mut stats = Vec::with_capacity(n);
    let mut dropped = Vec::new();
    let mut active = Vec::new();
    for (j, id) in ids.iter().enumerate() {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let st = ScoreStats::of(&col);
        // NaN std counts as constant
        if st.std.is_nan() || st.std <= MIN_STD {
            warn!("comparator {id} is constant on the training trials; dropping it from fusion");
            dropped.push(id.clone());
            stats.push(ScoreStats {
                mean: st.mean,
                std: 1.0,
            });
        } else {
            active.push(j);
            stats.push(st);
        }
    }
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| active.iter().map(|&j| stats[j].normalize(r[j])).collect())
        .collect();
    let fit = fit_logistic(&z, labels, RIDGE)?;
    let mut weights = vec![0.0; n];
    for (k, &j) in active.iter().enumerate() {
        weights[j] = fit.weights[k];
    }
    Ok(FusionModel {
        comparator_ids: ids,
        weights,
        bias: fit.bias,
        stats,
        training: TrainingMeta {
            fold,
            iterations: fit.iterations,
            log_likelihood: fit.log_likelihood,
            trials: rows.len(),
            dropped,
        },
    })
}

/// Trains a fusion model on score sets that share the same trial list.
pub fn train_fusion(sets: &[ScoreSet]) -> Result<FusionModel> {
    let (rows, labels) = aligned_rows(sets)?;
    let ids = sets.iter().map(|s| s.comparator_id.clone()).collect();
    train_rows(ids, &rows, &labels, None)
}

fn fused_id(prefix: &str, sets: &[ScoreSet]) -> String {
    let ids: Vec<&str> = sets.iter().map(|s| s.comparator_id.as_str()).collect();
    format!("{prefix}:{}", ids.join("+"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoFoldFusion {
    pub fused: ScoreSet,
    /// `models[k]` was trained on fold `k + 1` and applied to the other fold.
    pub models: [FusionModel; 2],
}

/// Two-fold cross-validated fusion: train on fold 1 and score fold 2, train
/// on fold 2 and score fold 1. `folds[i]` (1 or 2) is the fold of trial `i`.
pub fn two_fold_fusion(sets: &[ScoreSet], folds: &[u8]) -> Result<TwoFoldFusion> {
    let (rows, labels) = aligned_rows(sets)?;
    if folds.len() != rows.len() {
        return Err(Error::invalid(format!(
            "{} fold assignments for {} trials",
            folds.len(),
            rows.len()
        )));
    }
    if let Some(bad) = folds.iter().find(|&&f| f != 1 && f != 2) {
        return Err(Error::invalid(format!("fold id {bad} is not 1 or 2")));
    }
    let ids: Vec<String> = sets.iter().map(|s| s.comparator_id.clone()).collect();
    let mut models = Vec::with_capacity(2);
    for fold in [1u8, 2] {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| folds[i] == fold).collect();
        let has = |g: bool| idx.iter().any(|&i| labels[i] == g);
        if !(has(true) && has(false)) {
            return Err(Error::invalid(format!(
                "fold {fold} does not contain both genuine and impostor trials"
            )));
        }
        let r: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
        let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        models.push(train_rows(ids.clone(), &r, &l, Some(fold))?);
    }
    let first = &sets[0];
    let entries = first
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            // a trial in fold 1 is scored by the model trained on fold 2
            let model = &models[if folds[i] == 1 { 1 } else { 0 }];
            Ok(ScoreEntry {
                score: model.apply(&rows[i])?,
                ..e.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let models: [FusionModel; 2] = models.try_into().expect("two folds");
    Ok(TwoFoldFusion {
        fused: ScoreSet {
            comparator_id: fused_id("fusion", sets),
            entries,
        },
        models,
    })
}

/// Mean of z-normalized scores (statistics over all trials); a reference
/// simple-rule baseline for the trained fusion.
pub fn mean_rule(sets: &[ScoreSet]) -> Result<ScoreSet> {
    let (rows, _) = aligned_rows(sets)?;
    let stats: Vec<ScoreStats> = (0..sets.len())
        .map(|j| {
            let st = ScoreStats::of(&rows.iter().map(|r| r[j]).collect::<Vec<_>>());
            if st.std > MIN_STD {
                st
            } else {
                ScoreStats {
                    mean: st.mean,
                    std: 1.0,
                }
            }
        })
        .collect();
    let n = sets.len() as f64;
    let entries = sets[0]
        .entries
        .iter()
        .zip(&rows)
        .map(|(e, r)| ScoreEntry {
            score: r
                .iter()
                .zip(&stats)
                .map(|(&s, st)| st.normalize(s))
                .sum::<f64>()
                / n,
            ..e.clone()
        })
        .collect();
    Ok(ScoreSet {
        comparator_id: fused_id("mean", sets),
        entries,
    })
}

/// Fold of each trial from the protocol index of its enrolment user:
/// even users go to fold 1, odd users to fold 2.
pub fn folds_by_user_parity(
    set: &ScoreSet,
    user_of: impl Fn(&str) -> Option<usize>,
) -> Result<Vec<u8>> {
    set.entries
        .iter()
        .map(|e| {
            user_of(&e.enrol_id)
                .map(|u| if u % 2 == 0 { 1 } else { 2 })
                .ok_or_else(|| Error::invalid(format!("unknown enrolment image {}", e.enrol_id)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{det_from_scores, Label};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn label_of(g: bool) -> Label {
        if g {
            Label::Genuine
        } else {
            Label::Impostor
        }
    }

    fn set(id: &str, scores: &[f64], labels: &[bool]) -> ScoreSet {
        ScoreSet {
            comparator_id: id.into(),
            entries: scores
                .iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (&s, &g))| ScoreEntry {
                    enrol_id: format!("e{i}"),
                    probe_id: format!("p{i}"),
                    label: label_of(g),
                    score: s,
                })
                .collect(),
        }
    }

    fn model(weights: Vec<f64>, bias: f64, stats: Vec<ScoreStats>) -> FusionModel {
        FusionModel {
            comparator_ids: (0..weights.len()).map(|i| format!("c{i}")).collect(),
            weights,
            bias,
            stats,
            training: TrainingMeta {
                fold: None,
                iterations: 0,
                log_likelihood: 0.0,
                trials: 0,
                dropped: vec![],
            },
        }
    }

    #[test]
    fn apply_hand_examples() {
        let m = model(vec![0.0, 0.0], 0.7, vec![ScoreStats::IDENTITY; 2]);
        assert_eq!(m.apply(&[3.0, -9.0]).unwrap(), 0.7);
        let m = model(vec![1.0], 0.0, vec![ScoreStats::IDENTITY]);
        assert_eq!(m.apply(&[0.42]).unwrap(), 0.42);
        // 0.5 + 2*(3-1)/2 - 1*(0.5-0.0)/0.25 = 0.5 + 2 - 2 = 0.5
        let m = model(
            vec![2.0, -1.0],
            0.5,
            vec![
                ScoreStats {
                    mean: 1.0,
                    std: 2.0,
                },
                ScoreStats {
                    mean: 0.0,
                    std: 0.25,
                },
            ],
        );
        assert!((m.apply(&[3.0, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(m.apply(&[1.0]).is_err());
    }

    #[test]
    fn separable_comparator_keeps_zero_eer() {
        let labels: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let scores: Vec<f64> = labels
            .iter()
            .enumerate()
            .map(|(i, &g)| {
                if g {
                    5.0 + i as f64 * 0.01
                } else {
                    i as f64 * 0.01
                }
            })
            .collect();
        let s = set("a", &scores, &labels);
        let m = train_fusion(std::slice::from_ref(&s)).unwrap();
        assert!(m.weights[0] > 0.0);
        let fused: Vec<f64> = scores.iter().map(|&v| m.apply(&[v]).unwrap()).collect();
        let gen: Vec<f64> = fused
            .iter()
            .zip(&labels)
            .filter(|(_, &g)| g)
            .map(|(&f, _)| f)
            .collect();
        let imp: Vec<f64> = fused
            .iter()
            .zip(&labels)
            .filter(|(_, &g)| !g)
            .map(|(&f, _)| f)
            .collect();
        assert_eq!(det_from_scores(&gen, &imp).unwrap().eer, 0.0);
    }

    #[test]
    fn noise_comparator_gets_smaller_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let labels: Vec<bool> = (0..600).map(|i| i % 4 == 0).collect();
        let informative: Vec<f64> = labels
            .iter()
            .map(|&g| if g { 1.0 } else { 0.0 } + rng.gen_range(-0.8..0.8))
            .collect();
        let noise: Vec<f64> = labels.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let m =
            train_fusion(&[set("a", &informative, &labels), set("b", &noise, &labels)]).unwrap();
        assert!(m.weights[1].abs() < m.weights[0].abs(), "{:?}", m.weights);
    }

    #[test]
    fn rejects_single_class_and_mismatch() {
        let a = set("a", &[0.1, 0.2], &[true, true]);
        assert!(train_fusion(&[a]).is_err());
        let a = set("a", &[0.1, 0.2], &[true, false]);
        let b = set("b", &[0.1], &[true]);
        assert!(train_fusion(&[a.clone(), b]).is_err());
        let mut c = a.clone();
        c.entries[1].probe_id = "other".into();
        assert!(train_fusion(&[a, c]).is_err());
    }

    #[test]
    fn constant_comparator_is_dropped() {
        let labels = [true, false, true, false, false];
        let a = set("a", &[0.9, 0.1, 0.8, 0.3, 0.5], &labels);
        let b = set("b", &[1.0; 5], &labels);
        let m = train_fusion(&[a, b]).unwrap();
        assert_eq!(m.weights[1], 0.0);
        assert_eq!(m.training.dropped, vec!["b".to_string()]);
    }

    #[test]
    fn json_roundtrip() {
        let labels = [true, false, true, false];
        let m = train_fusion(&[set("a", &[0.9, 0.2, 0.4, 0.5], &labels)]).unwrap();
        assert_eq!(FusionModel::from_json(&m.to_json()).unwrap(), m);
        assert!(FusionModel::from_json("{}").is_err());
    }

    #[test]
    fn fold_partition_and_errors() {
        let labels: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
        let scores: Vec<f64> = (0..20).map(|i| (i * 7 % 11) as f64).collect();
        let s = set("a", &scores, &labels);
        let folds: Vec<u8> = (0..20).map(|i| if i < 10 { 1 } else { 2 }).collect();
        let r = two_fold_fusion(std::slice::from_ref(&s), &folds).unwrap();
        assert_eq!(r.fused.entries.len(), 20);
        assert_eq!(r.models[0].training.fold, Some(1));
        let bad: Vec<u8> = (0..20).map(|i| if i % 2 == 0 { 1 } else { 2 }).collect();
        assert!(two_fold_fusion(std::slice::from_ref(&s), &bad).is_err());
        assert!(two_fold_fusion(&[s], &[1; 3]).is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
    }
}
