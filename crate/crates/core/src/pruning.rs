//! Sample scores, pruning criteria and the automatic class-balance cap.
//!
//! Every `interval` epochs each set is scored by the variance of its
//! per-sample prediction error over the last `interval` epochs (VoE). A
//! fixed percentage of the currently remaining samples is then removed from
//! the low or high end of the ranking, subject to a per-class cap
//! `floor(|class_i| / N)` where the intensity `N` grows as the set's class
//! balance degree falls.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bilevel::SetState;
use crate::error::{BdpError, Result};

/// Which tail of the score ranking gets pruned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Low,
    High,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Low => "low",
            Criterion::High => "high",
        })
    }
}

/// Functional form of the constraint intensity `N(b)`.
///
/// * `A`: `n(1 − b²) + 1`
/// * `B`: `n^(1 − b)`
/// * `C`: `e^(n(1 − b))`
/// * `D`: `1 − n ln b`
/// * `E`: `n(1 − b) + 1`
/// * `F`: `n(1 − b³) + 1`
/// * `None`: always 1 (no constraint)
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintFamily {
    None,
    A,
    B,
    C,
    D,
    E,
    F,
}

impl ConstraintFamily {
    pub const ALL: [ConstraintFamily; 7] = [
        ConstraintFamily::None,
        ConstraintFamily::A,
        ConstraintFamily::B,
        ConstraintFamily::C,
        ConstraintFamily::D,
        ConstraintFamily::E,
        ConstraintFamily::F,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstraintFamily::None => "none",
            ConstraintFamily::A => "a",
            ConstraintFamily::B => "b",
            ConstraintFamily::C => "c",
            ConstraintFamily::D => "d",
            ConstraintFamily::E => "e",
            ConstraintFamily::F => "f",
        }
    }
}

impl FromStr for ConstraintFamily {
    type Err = BdpError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        ConstraintFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or(BdpError::UnknownFamily(s))
    }
}

/// Progressive pruning schedule for both sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneConfig {
    /// Pruning interval in epochs; also the VoE window length.
    pub interval: usize,
    /// Percent of the remaining training set removed per round.
    pub p_train: f64,
    /// Percent of the remaining validation set removed per round.
    pub p_val: f64,
    #[serde(default = "default_low")]
    pub criterion_train: Criterion,
    #[serde(default = "default_high")]
    pub criterion_val: Criterion,
    #[serde(default = "default_family")]
    pub constraint_family: ConstraintFamily,
}

fn default_low() -> Criterion {
    Criterion::Low
}

fn default_high() -> Criterion {
    Criterion::High
}

fn default_family() -> ConstraintFamily {
    ConstraintFamily::A
}

impl Default for PruneConfig {
    fn default() -> Self {
        Self {
            interval: 10,
            p_train: 15.0,
            p_val: 15.0,
            criterion_train: Criterion::Low,
            criterion_val: Criterion::High,
            constraint_family: ConstraintFamily::A,
        }
    }
}

impl PruneConfig {
    pub fn validate(&self, epochs: usize) -> Result<()> {
        if self.interval == 0 {
            return Err(BdpError::InvalidConfig("prune interval must be >= 1".into()));
        }
        for (name, p) in [("p_train", self.p_train), ("p_val", self.p_val)] {
            if !(0.0..=100.0).contains(&p) {
                return Err(BdpError::InvalidConfig(format!("{name} must be in [0, 100]")));
            }
        }
        if epochs % self.interval != 0 {
            return Err(BdpError::InvalidConfig(format!(
                "prune interval {} does not divide {epochs} epochs",
                self.interval
            )));
        }
        Ok(())
    }

    /// Total number of pruning rounds `n = E / interval`.
    pub fn rounds(&self, epochs: usize) -> usize {
        epochs / self.interval
    }
}

/// Score per active sample id.
pub type ScoreTable = BTreeMap<usize, f64>;

/// EL2N score at `epoch`: the recorded prediction error of that epoch.
pub fn el2n(history: &[(usize, f64)], epoch: usize) -> Option<f64> {
    history.iter().find(|(t, _)| *t == epoch).map(|&(_, e)| e)
}

/// Population variance of a window of errors.
pub fn window_variance(errors: &[f64]) -> f64 {
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n
}

/// VoE over epochs `t0 .. t0 + window`. `history` holds `(epoch, e)` pairs.
pub fn voe(history: &[(usize, f64)], t0: usize, window: usize) -> std::result::Result<f64, usize> {
    let vals = (t0..t0 + window)
        .map(|t| el2n(history, t).ok_or(t))
        .collect::<std::result::Result<Vec<f64>, usize>>()?;
    Ok(window_variance(&vals))
}

/// VoE of every active sample over the `window` epochs ending at `epoch`.
pub fn voe_scores(set: &SetState, epoch: usize, window: usize) -> Result<ScoreTable> {
    if window == 0 || epoch < window {
        return Err(BdpError::InvalidConfig(format!(
            "window {window} does not fit before epoch {epoch}"
        )));
    }
    let t0 = epoch + 1 - window;
    set.active_ids()
        .iter()
        .map(|&id| {
            voe(set.history(id), t0, window)
                .map(|s| (id, s))
                .map_err(|missing| BdpError::InsufficientHistory { id, epoch: missing })
        })
        .collect()
}

/// EL2N of every active sample at `epoch`.
pub fn el2n_scores(set: &SetState, epoch: usize) -> Result<ScoreTable> {
    set.active_ids()
        .iter()
        .map(|&id| {
            el2n(set.history(id), epoch)
                .map(|s| (id, s))
                .ok_or(BdpError::InsufficientHistory { id, epoch })
        })
        .collect()
}

/// Mean pairwise min/max ratio of class counts.
pub fn balance_degree(counts: &[usize]) -> Result<f64> {
    let m = counts.len();
    if m < 2 {
        return Err(BdpError::InvalidConfig("balance degree needs >= 2 classes".into()));
    }
    let mut sum = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let (lo, hi) = (counts[i].min(counts[j]), counts[i].max(counts[j]));
            sum += if hi == 0 { 1.0 } else { lo as f64 / hi as f64 };
        }
    }
    Ok(sum / (m * (m - 1) / 2) as f64)
}

/// Constraint intensity `N` for balance degree `b` and `n` total rounds.
pub fn constraint_intensity(b: f64, n: usize, family: ConstraintFamily) -> f64 {
    let n = n as f64;
    match family {
        ConstraintFamily::None => 1.0,
        ConstraintFamily::A => n * (1.0 - b * b) + 1.0,
        ConstraintFamily::B => n.powf(1.0 - b),
        ConstraintFamily::C => (n * (1.0 - b)).exp(),
        // ln 0 = -inf gives N = +inf: nothing may be pruned.
        ConstraintFamily::D => 1.0 - n * b.ln(),
        ConstraintFamily::E => n * (1.0 - b) + 1.0,
        ConstraintFamily::F => n * (1.0 - b * b * b) + 1.0,
    }
}

/// Per-class pruning cap for one round: `floor(|class_i| / N)`.
pub fn class_limits(counts: &[usize], intensity: f64) -> Vec<usize> {
    counts
        .iter()
        .map(|&c| {
            if intensity.is_infinite() {
                0
            } else {
                (c as f64 / intensity).floor() as usize
            }
        })
        .collect()
}

/// `round(p/100 · remaining)`, ties to even.
pub fn prune_target(p: f64, remaining: usize) -> usize {
    ((p * remaining as f64 / 100.0).round_ties_even() as usize).min(remaining)
}

/// Selection made by one pruning round.
#[derive(Debug, Clone, PartialEq)]
pub struct PrunePlan {
    pub target: usize,
    pub selected: Vec<usize>,
}

impl PrunePlan {
    /// Samples the caps prevented from being removed.
    pub fn shortfall(&self) -> usize {
        self.target - self.selected.len()
    }
}

fn ranked(scores: &ScoreTable, criterion: Criterion) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = scores.iter().map(|(&id, &s)| (id, s)).collect();
    v.sort_by(|a, b| {
        let by_score = match criterion {
            Criterion::Low => a.1.total_cmp(&b.1),
            Criterion::High => b.1.total_cmp(&a.1),
        };
        by_score.then(a.0.cmp(&b.0))
    });
    v
}

/// Greedy cap-respecting walk down the sorted score list.
pub fn plan_prune(
    set: &SetState,
    scores: &ScoreTable,
    p: f64,
    criterion: Criterion,
    caps: &[usize],
) -> Result<PrunePlan> {
    if scores.len() != set.len() || set.active_ids().iter().any(|id| !scores.contains_key(id)) {
        return Err(BdpError::InvalidConfig(
            "score table does not cover the active set".into(),
        ));
    }
    let target = prune_target(p, set.len());
    let mut used = vec![0usize; caps.len()];
    let mut selected = Vec::with_capacity(target);
    for (id, _) in ranked(scores, criterion) {
        if selected.len() == target {
            break;
        }
        let c = set.label(id);
        if used[c] < caps[c] {
            used[c] += 1;
            selected.push(id);
        }
    }
    Ok(PrunePlan { target, selected })
}

/// Plans and applies one pruning round; returns the plan.
pub fn prune_round(
    set: &mut SetState,
    scores: &ScoreTable,
    p: f64,
    criterion: Criterion,
    caps: &[usize],
) -> Result<PrunePlan> {
    let plan = plan_prune(set, scores, p, criterion, caps)?;
    set.remove(&plan.selected)?;
    Ok(plan)
}

/// Caps for this round from the set's own class counts.
pub fn round_caps(set: &SetState, rounds: usize, family: ConstraintFamily) -> Result<(f64, f64, Vec<usize>)> {
    let b = balance_degree(set.class_counts())?;
    let intensity = constraint_intensity(b, rounds.max(1), family);
    Ok((b, intensity, class_limits(set.class_counts(), intensity)))
}

/// Discards one tail of the EL2N ranking at `epoch` in a single shot, with
/// no class-balance cap. `discard = Low` removes the lowest-scoring
/// samples. Returns the discarded ids.
pub fn one_shot_el2n_prune(
    set: &mut SetState,
    epoch: usize,
    discard: Criterion,
    fraction: f64,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(BdpError::InvalidConfig("fraction must be in [0, 1]".into()));
    }
    let scores = el2n_scores(set, epoch)?;
    let caps: Vec<usize> = set.class_counts().to_vec();
    Ok(prune_round(set, &scores, fraction * 100.0, discard, &caps)?.selected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_with(labels: &[usize], num_classes: usize) -> SetState {
        SetState::new((0..labels.len()).collect(), labels, num_classes)
    }

    #[test]
    fn el2n_examples() {
        assert_eq!(el2n(&[(1, 0.0)], 1), Some(0.0));
        assert_eq!(el2n(&[(1, 0.3)], 2), None);
        let e = crate::supernet::prediction_error(&[0.5, 0.5], 0);
        assert!((e - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn voe_examples() {
        let h = [(1, 0.3), (2, 0.3), (3, 0.3)];
        assert_eq!(voe(&h, 1, 3), Ok(0.0));
        let h = [(4, 0.2), (5, 0.4)];
        assert!((voe(&h, 4, 2).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(voe(&h, 4, 3), Err(6));
    }

    #[test]
    fn balance_examples() {
        assert_eq!(balance_degree(&[7, 7, 7]).unwrap(), 1.0);
        assert_eq!(balance_degree(&[10, 5]).unwrap(), 0.5);
        assert!((balance_degree(&[8, 4, 2]).unwrap() - 1.25 / 3.0).abs() < 1e-15);
        assert_eq!(balance_degree(&[0, 0]).unwrap(), 1.0);
        assert_eq!(balance_degree(&[0, 3]).unwrap(), 0.0);
        assert!(balance_degree(&[3]).is_err());
    }

    #[test]
    fn intensity_examples() {
        for f in ConstraintFamily::ALL {
            assert_eq!(constraint_intensity(1.0, 10, f), 1.0, "{f:?}");
        }
        assert_eq!(constraint_intensity(0.5, 10, ConstraintFamily::A), 8.5);
        assert_eq!(constraint_intensity(0.0, 10, ConstraintFamily::E), 11.0);
        assert!(constraint_intensity(0.0, 10, ConstraintFamily::D).is_infinite());
        assert!("z".parse::<ConstraintFamily>().is_err());
        assert_eq!("A".parse::<ConstraintFamily>().unwrap(), ConstraintFamily::A);
    }

    #[test]
    fn limits_examples() {
        assert_eq!(class_limits(&[50, 13, 0], 1.0), vec![50, 13, 0]);
        assert_eq!(class_limits(&[50], 8.5), vec![5]);
        assert_eq!(class_limits(&[50, 3], f64::INFINITY), vec![0, 0]);
    }

    #[test]
    fn rounding_is_ties_to_even() {
        assert_eq!(prune_target(15.0, 600), 90);
        assert_eq!(prune_target(15.0, 510), 76);
        assert_eq!(prune_target(15.0, 434), 65);
        assert_eq!(prune_target(0.0, 434), 0);
        assert_eq!(prune_target(100.0, 7), 7);
    }

    #[test]
    fn prune_zero_removes_nothing() {
        let mut s = set_with(&[0, 1, 0, 1], 2);
        let scores: ScoreTable = (0..4).map(|i| (i, i as f64)).collect();
        let plan = prune_round(&mut s, &scores, 0.0, Criterion::Low, &[2, 2]).unwrap();
        assert!(plan.selected.is_empty());
        assert_eq!(s.len(), 4);
    }

    #[test]
    fn prune_low_takes_lowest_scores() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let mut s = set_with(&labels, 4);
        // Scores decreasing in id: lowest scores are the highest ids.
        let scores: ScoreTable = (0..100).map(|i| (i, 1000.0 - i as f64)).collect();
        let plan = prune_round(&mut s, &scores, 20.0, Criterion::Low, &[25; 4]).unwrap();
        let mut got = plan.selected.clone();
        got.sort_unstable();
        assert_eq!(got, (80..100).collect::<Vec<_>>());
        assert_eq!(s.len(), 80);
        assert_eq!(s.class_counts(), &[20, 20, 20, 20]);
    }

    #[test]
    fn prune_high_ties_break_by_id() {
        let mut s = set_with(&[0, 0, 0, 0], 1);
        let scores: ScoreTable = (0..4).map(|i| (i, 1.0)).collect();
        let plan = plan_prune(&s, &scores, 50.0, Criterion::High, &[4]).unwrap();
        assert_eq!(plan.selected, vec![0, 1]);
        prune_round(&mut s, &scores, 50.0, Criterion::High, &[4]).unwrap();
        assert_eq!(s.active_ids(), &[2, 3]);
    }

    #[test]
    fn binding_caps_two_classes() {
        // Class 0 holds ids 0..10, class 1 ids 10..20. N = 5 gives caps (2, 2).
        let labels: Vec<usize> = (0..20).map(|i| i / 10).collect();
        let mut s = set_with(&labels, 2);
        let caps = class_limits(s.class_counts(), 5.0);
        assert_eq!(caps, vec![2, 2]);
        let scores: ScoreTable = (0..20).map(|i| (i, ((i * 7) % 20) as f64)).collect();
        // Brute-force greedy walk: ascending order of (score, id).
        let mut order: Vec<usize> = (0..20).collect();
        order.sort_by_key(|&i| ((i * 7) % 20, i));
        let mut want = Vec::new();
        let mut used = [0, 0];
        for i in order {
            if used[i / 10] < 2 {
                used[i / 10] += 1;
                want.push(i);
            }
        }
        let plan = prune_round(&mut s, &scores, 50.0, Criterion::Low, &caps).unwrap();
        assert_eq!(plan.target, 10);
        assert_eq!(plan.selected, want);
        assert_eq!(plan.shortfall(), 6);
        assert_eq!(s.class_counts(), &[8, 8]);
    }

    #[test]
    fn scores_must_cover_active_set() {
        let s = set_with(&[0, 1, 0], 2);
        let scores: ScoreTable = (0..2).map(|i| (i, 0.0)).collect();
        assert!(plan_prune(&s, &scores, 50.0, Criterion::Low, &[3, 3]).is_err());
    }

    #[test]
    fn one_shot_half() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let mut s = set_with(&labels, 2);
        for id in 0..100 {
            s.record(id, 3, id as f64 / 100.0).unwrap();
        }
        let original = s.active_ids().to_vec();
        let gone = one_shot_el2n_prune(&mut s, 3, Criterion::Low, 0.5).unwrap();
        assert_eq!(s.len(), 50);
        assert_eq!(s.active_ids(), (50..100).collect::<Vec<_>>().as_slice());
        let mut all: Vec<usize> = gone.iter().chain(s.active_ids()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, original);
    }

    #[test]
    fn one_shot_needs_scores() {
        let mut s = set_with(&[0, 1], 2);
        assert!(one_shot_el2n_prune(&mut s, 1, Criterion::High, 0.5).is_err());
    }

    #[test]
    fn voe_scores_need_full_window() {
        let mut s = set_with(&[0, 1], 2);
        for t in 1..=3 {
            s.record(0, t, 0.1 * t as f64).unwrap();
        }
        s.record(1, 3, 0.5).unwrap();
        assert!(matches!(
            voe_scores(&s, 3, 3),
            Err(BdpError::InsufficientHistory { id: 1, epoch: 1 })
        ));
        s.remove(&[1]).unwrap();
        let t = voe_scores(&s, 3, 3).unwrap();
        assert!((t[&0] - window_variance(&[0.1, 0.2, 0.30000000000000004])).abs() < 1e-15);
    }
}
