// SPDX-License-Identifier: MIT OR Apache-2.0

//! Single-unit ablation sweeps, z-scored effects, unit ranking and the
//! cumulative top-k study.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{encode_trials, evaluate_encoded, EncodedTrial, EvalRecord};
use crate::lstm::{AblationMask, AblationMode, Checkpoint, UnitId};
use crate::numerics::{mean, population_sd};
use crate::stimuli::{TargetRole, Trial};

/// Conventional significance threshold on effect z-scores.
pub const Z_THRESHOLD: f64 = -3.0;

/// Per-condition accuracy and mean success probability.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConditionScores {
    pub accuracy: BTreeMap<String, f64>,
    pub success_probability: BTreeMap<String, f64>,
    pub n: BTreeMap<String, usize>,
}

impl ConditionScores {
    pub fn from_records(records: &[EvalRecord]) -> Self {
        let mut sums: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
        for r in records {
            let e = sums.entry(r.condition.label()).or_default();
            e.0 += 1;
            e.1 += f64::from(r.score);
            e.2 += r.success_probability;
        }
        let mut out = Self::default();
        for (c, (n, s, p)) in sums {
            out.accuracy.insert(c.clone(), s / n as f64);
            out.success_probability.insert(c.clone(), p / n as f64);
            out.n.insert(c, n);
        }
        out
    }

    pub fn conditions(&self) -> impl Iterator<Item = &String> {
        self.accuracy.keys()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationEffect {
    pub unit: UnitId,
    pub scores: ConditionScores,
    /// Ablated minus full accuracy.
    pub delta: BTreeMap<String, f64>,
    pub delta_success: BTreeMap<String, f64>,
    /// Filled by [`zscore`].
    pub z: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleUnitStudy {
    pub baseline: ConditionScores,
    pub effects: Vec<AblationEffect>,
    /// Conditions whose deltas had zero spread (all z set to 0).
    pub degenerate: BTreeMap<String, bool>,
    pub mode: AblationMode,
}

fn scores_for(
    ckpt: &Checkpoint,
    enc: &[EncodedTrial<'_>],
    role: Option<TargetRole>,
    mask: &AblationMask,
    parallel: bool,
) -> Result<ConditionScores> {
    Ok(ConditionScores::from_records(&evaluate_encoded(ckpt, enc, role, mask, parallel)?))
}

/// One evaluation per recurrent unit with a singleton mask, z-scored per
/// condition. `parallel` spreads units over the rayon pool; the result is
/// identical either way.
pub fn single_unit_study(
    ckpt: &Checkpoint,
    trials: &[Trial],
    role: Option<TargetRole>,
    mode: AblationMode,
    parallel: bool,
) -> Result<SingleUnitStudy> {
    if trials.is_empty() {
        return Err(Error::arg("single-unit study needs at least one trial"));
    }
    let enc = encode_trials(&ckpt.vocab, trials)?;
    let baseline = scores_for(ckpt, &enc, role, &AblationMask::empty(), false)?;
    let run = |u: UnitId| -> Result<AblationEffect> {
        let mask = AblationMask::from_units([u]).with_mode(mode);
        let scores = scores_for(ckpt, &enc, role, &mask, false)?;
        let delta = diff(&scores.accuracy, &baseline.accuracy);
        let delta_success = diff(&scores.success_probability, &baseline.success_probability);
        Ok(AblationEffect {
            unit: u,
            scores,
            delta,
            delta_success,
            z: BTreeMap::new(),
        })
    };
    let units = ckpt.all_units();
    let results: Vec<Result<AblationEffect>> = if parallel {
        units.par_iter().map(|&u| run(u)).collect()
    } else {
        units.iter().map(|&u| run(u)).collect()
    };
    let mut effects = results.into_iter().collect::<Result<Vec<_>>>()?;
    effects.sort_by_key(|e| e.unit);
    let mut degenerate = BTreeMap::new();
    let conds: Vec<String> = baseline.conditions().cloned().collect();
    if effects.len() >= 2 {
        for c in conds {
            let d = zscore(&mut effects, &c)?;
            degenerate.insert(c, d);
        }
    }
    Ok(SingleUnitStudy {
        baseline,
        effects,
        degenerate,
        mode,
    })
}

fn diff(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    a.iter().map(|(k, v)| (k.clone(), v - b[k])).collect()
}

/// Standardizes the accuracy deltas of `condition` over all effects, with the
/// population standard deviation. Returns `true` (and zeros) when every delta
/// is the same.
pub fn zscore(effects: &mut [AblationEffect], condition: &str) -> Result<bool> {
    if effects.len() < 2 {
        return Err(Error::arg("z-scores need at least two effects"));
    }
    let deltas = effects
        .iter()
        .map(|e| {
            e.delta
                .get(condition)
                .copied()
                .ok_or_else(|| Error::arg(format!("condition {condition} missing from unit {}", e.unit)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let m = mean(&deltas);
    let sd = population_sd(&deltas);
    let degenerate = sd == 0.0 || !sd.is_finite();
    for (e, d) in effects.iter_mut().zip(&deltas) {
        let z = if degenerate { 0.0 } else { (d - m) / sd };
        e.z.insert(condition.to_string(), z);
    }
    Ok(degenerate)
}

/// Which per-condition delta orders the units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMetric {
    #[default]
    Accuracy,
    /// Mean success probability; useful when accuracy is saturated and
    /// single-unit accuracy deltas are all zero.
    SuccessProbability,
}

impl std::str::FromStr for RankMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" => Ok(RankMetric::Accuracy),
            "success_probability" => Ok(RankMetric::SuccessProbability),
            _ => Err(Error::arg(format!("unknown rank metric {s:?}"))),
        }
    }
}

/// Units ordered most harmful first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedUnits {
    /// Conditions whose summed delta is the ranking key.
    pub criterion: Vec<String>,
    pub metric: RankMetric,
    pub tie_break: String,
    pub units: Vec<UnitId>,
}

impl RankedUnits {
    pub fn top(&self, k: usize) -> AblationMask {
        AblationMask::from_units(self.units.iter().take(k).copied())
    }
}

/// Ranks by ascending summed delta over `criterion`; ties by (layer, index).
pub fn rank_units(study: &SingleUnitStudy, criterion: &[&str], metric: RankMetric) -> Result<RankedUnits> {
    if criterion.is_empty() {
        return Err(Error::arg("ranking criterion names no condition"));
    }
    let mut keyed = Vec::with_capacity(study.effects.len());
    for e in &study.effects {
        let mut s = 0.0;
        for c in criterion {
            let deltas = match metric {
                RankMetric::Accuracy => &e.delta,
                RankMetric::SuccessProbability => &e.delta_success,
            };
            s += deltas
                .get(*c)
                .ok_or_else(|| Error::arg(format!("ranking condition {c} not in the study")))?;
        }
        keyed.push((s, e.unit));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(RankedUnits {
        criterion: criterion.iter().map(|c| c.to_string()).collect(),
        metric,
        tie_break: "layer,index ascending".into(),
        units: keyed.into_iter().map(|k| k.1).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopkRow {
    pub k: usize,
    pub condition: String,
    pub accuracy: f64,
    pub success_probability: f64,
}

/// Accuracy for the cumulative top-k mask, `k = 0..=k_max`.
pub fn topk_study(
    ckpt: &Checkpoint,
    ranked: &RankedUnits,
    k_max: usize,
    trials: &[Trial],
    role: Option<TargetRole>,
    mode: AblationMode,
) -> Result<Vec<TopkRow>> {
    if k_max > ranked.units.len() {
        return Err(Error::arg(format!(
            "k_max {k_max} exceeds the {} ranked units",
            ranked.units.len()
        )));
    }
    let enc = encode_trials(&ckpt.vocab, trials)?;
    let per_k = (0..=k_max)
        .into_par_iter()
        .map(|k| scores_for(ckpt, &enc, role, &ranked.top(k).with_mode(mode), false))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (k, s) in per_k.into_iter().enumerate() {
        for (c, a) in &s.accuracy {
            rows.push(TopkRow {
                k,
                condition: c.clone(),
                accuracy: *a,
                success_probability: s.success_probability[c],
            });
        }
    }
    Ok(rows)
}

pub fn accuracy_at(rows: &[TopkRow], k: usize, condition: &str) -> Option<f64> {
    rows.iter().find(|r| r.k == k && r.condition == condition).map(|r| r.accuracy)
}

/// Accuracy drops at the first `k` where some incongruent condition falls
/// below the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingContrast {
    pub k: usize,
    /// Mean baseline-minus-ablated accuracy over the incongruent conditions.
    pub incongruent_drop: f64,
    pub congruent_drop: f64,
}

impl CrossingContrast {
    pub fn incongruent_worse(&self) -> bool {
        self.incongruent_drop > self.congruent_drop
    }
}

pub fn first_crossing(rows: &[TopkRow], incongruent: &[&str], congruent: &[&str], threshold: f64) -> Option<CrossingContrast> {
    let k_max = rows.iter().map(|r| r.k).max()?;
    let drop = |k: usize, conds: &[&str]| -> Option<f64> {
        let mut s = 0.0;
        for c in conds {
            s += accuracy_at(rows, 0, c)? - accuracy_at(rows, k, c)?;
        }
        Some(s / conds.len() as f64)
    };
    (0..=k_max)
        .find(|&k| incongruent.iter().any(|c| accuracy_at(rows, k, c).is_some_and(|a| a < threshold)))
        .and_then(|k| {
            Some(CrossingContrast {
                k,
                incongruent_drop: drop(k, incongruent)?,
                congruent_drop: drop(k, congruent)?,
            })
        })
}

pub const EFFECTS_CSV_HEADER: &str = "unit,layer,index,condition,accuracy,success_probability,delta,delta_success,z";

pub fn effects_csv(study: &SingleUnitStudy) -> String {
    let mut out = String::from(EFFECTS_CSV_HEADER);
    out.push('\n');
    for e in &study.effects {
        for (c, a) in &e.scores.accuracy {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                e.unit,
                e.unit.layer,
                e.unit.index,
                c,
                a,
                e.scores.success_probability[c],
                e.delta[c],
                e.delta_success[c],
                e.z.get(c).map_or("NA".to_string(), |z| z.to_string())
            ));
        }
    }
    out
}

pub const TOPK_CSV_HEADER: &str = "k,condition,accuracy,success_probability";

pub fn topk_csv(rows: &[TopkRow]) -> String {
    let mut out = String::from(TOPK_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.k, r.condition, r.accuracy, r.success_probability));
    }
    out
}

/// Units with `z < threshold` in any condition.
pub fn significant_units(study: &SingleUnitStudy, threshold: f64) -> Vec<(UnitId, String, f64)> {
    let mut out = Vec::new();
    for e in &study.effects {
        for (c, z) in &e.z {
            if *z < threshold {
                out.push((e.unit, c.clone(), *z));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eff(index: usize, d: f64) -> AblationEffect {
        AblationEffect {
            unit: UnitId::new(0, index),
            scores: ConditionScores::default(),
            delta: [("PS".to_string(), d)].into(),
            delta_success: BTreeMap::new(),
            z: BTreeMap::new(),
        }
    }

    #[test]
    fn zscore_hand_oracle() {
        let mut e: Vec<_> = [-0.2, 0.0, 0.0, 0.0].iter().enumerate().map(|(i, &d)| eff(i, d)).collect();
        assert!(!zscore(&mut e, "PS").unwrap());
        // mean -0.05, population sd sqrt(0.0075)
        let sd = (0.0075f64).sqrt();
        assert!((e[0].z["PS"] - (-0.15 / sd)).abs() < 1e-12);
        assert!((e[0].z["PS"] + 3f64.sqrt()).abs() < 1e-12);
        assert!((e[1].z["PS"] - 0.05 / sd).abs() < 1e-12);
    }

    #[test]
    fn zscore_degenerate_and_identity() {
        let mut e: Vec<_> = (0..5).map(|i| eff(i, 0.1)).collect();
        assert!(zscore(&mut e, "PS").unwrap());
        assert!(e.iter().all(|x| x.z["PS"] == 0.0));
        let mut e: Vec<_> = (0..37).map(|i| eff(i, ((i * 7919) % 31) as f64 / 31.0 - 0.4)).collect();
        zscore(&mut e, "PS").unwrap();
        let zs: Vec<f64> = e.iter().map(|x| x.z["PS"]).collect();
        assert!(mean(&zs).abs() < 1e-9);
        assert!((population_sd(&zs) - 1.0).abs() < 1e-9);
        assert!(zscore(&mut e[..1], "PS").is_err());
    }

    #[test]
    fn ranking_ties_by_unit() {
        let study = SingleUnitStudy {
            baseline: ConditionScores::default(),
            effects: vec![eff(3, -0.1), eff(1, -0.1), eff(2, -0.3), eff(0, 0.0)],
            degenerate: BTreeMap::new(),
            mode: AblationMode::default(),
        };
        let r = rank_units(&study, &["PS"], RankMetric::Accuracy).unwrap();
        let idx: Vec<usize> = r.units.iter().map(|u| u.index).collect();
        assert_eq!(idx, vec![2, 1, 3, 0]);
        assert!(rank_units(&study, &["XX"], RankMetric::Accuracy).is_err());
    }
}
