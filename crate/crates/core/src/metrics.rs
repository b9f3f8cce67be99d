//! Ranking and calibration metrics over scored events.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{GoldClassTag, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEvent {
    pub event_id: String,
    pub score: f64,
    pub label: Label,
    pub gold: Option<GoldClassTag>,
}

/// Which events count as positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositiveDef {
    /// Must-fire events.
    MFire,
    /// Everything outside the can-skip population.
    CSkip,
    /// Everything outside the must-skip subset.
    MSkip,
}

impl PositiveDef {
    pub const ALL: [PositiveDef; 3] = [PositiveDef::MFire, PositiveDef::CSkip, PositiveDef::MSkip];

    pub fn as_str(self) -> &'static str {
        match self {
            PositiveDef::MFire => "m_fire",
            PositiveDef::CSkip => "c_skip",
            PositiveDef::MSkip => "m_skip",
        }
    }

    /// `None` excludes the event. Without a gold tag the trigger label decides.
    pub fn classify(self, ev: &ScoredEvent) -> Option<bool> {
        if ev.label == Label::Unlabeled {
            return None;
        }
        match ev.gold {
            None => Some(ev.label == Label::Positive),
            Some(g) => Some(match self {
                PositiveDef::MFire => g == GoldClassTag::MustFire,
                PositiveDef::CSkip => !g.is_can_skip(),
                PositiveDef::MSkip => g != GoldClassTag::MustSkip,
            }),
        }
    }
}

fn binary(scored: &[ScoredEvent], def: PositiveDef) -> Vec<(f64, bool)> {
    scored.iter().filter_map(|e| def.classify(e).map(|y| (e.score, y))).collect()
}

/// Mann-Whitney AUC on raw `(score, positive)` pairs; ties count one half.
pub fn auc_pairs(pairs: &[(f64, bool)]) -> Option<f64> {
    let n_pos = pairs.iter().filter(|p| p.1).count() as u64;
    let n_neg = pairs.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the rank sum of positives, with tied groups at their average rank.
    let mut rank2_pos: u64 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].0.total_cmp(&sorted[i].0).is_eq() {
            j += 1;
        }
        let avg2 = (i + 1 + j + 1) as u64;
        let pos_in_group = sorted[i..=j].iter().filter(|p| p.1).count() as u64;
        rank2_pos += avg2 * pos_in_group;
        i = j + 1;
    }
    let u2 = rank2_pos - n_pos * (n_pos + 1);
    Some(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

pub fn auc(scored: &[ScoredEvent], def: PositiveDef) -> Result<f64> {
    auc_pairs(&binary(scored, def)).ok_or(Error::DegenerateClass(def.as_str()))
}

pub fn brier_pairs(pairs: &[(f64, bool)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let sum: f64 = pairs.iter().map(|&(s, y)| (s - if y { 1.0 } else { 0.0 }) * (s - if y { 1.0 } else { 0.0 })).sum();
    Some(sum / pairs.len() as f64)
}

pub fn brier(scored: &[ScoredEvent], def: PositiveDef) -> Result<f64> {
    brier_pairs(&binary(scored, def)).ok_or(Error::NoLabels)
}

/// Equal-width bin index; the last bin is closed on the right.
pub fn bin_index(score: f64, bins: usize) -> usize {
    let b = libm::floor(score.clamp(0.0, 1.0) * bins as f64) as usize;
    b.min(bins - 1)
}

pub fn ece_pairs(pairs: &[(f64, bool)], bins: usize) -> Option<f64> {
    if pairs.is_empty() || bins == 0 {
        return None;
    }
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0f64; bins];
    let mut acc = vec![0.0f64; bins];
    for &(s, y) in pairs {
        let b = bin_index(s, bins);
        count[b] += 1;
        conf[b] += s;
        if y {
            acc[b] += 1.0;
        }
    }
    let n = pairs.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let c = count[b] as f64;
        total += (c / n) * (acc[b] / c - conf[b] / c).abs();
    }
    Some(total)
}

pub fn ece(scored: &[ScoredEvent], def: PositiveDef, bins: usize) -> Result<f64> {
    ece_pairs(&binary(scored, def), bins).ok_or(Error::NoLabels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub fractions: Vec<f64>,
    /// Mass in the first and last bins.
    pub extremes: f64,
}

/// 20 bins of width 0.05 over `[0, 1]`.
pub fn score_histogram(scores: &[f64]) -> Histogram {
    const BINS: usize = 20;
    let mut counts = [0usize; BINS];
    for &s in scores {
        counts[bin_index(s, BINS)] += 1;
    }
    let n = scores.len().max(1) as f64;
    let fractions: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    let extremes = if scores.is_empty() { 0.0 } else { (counts[0] + counts[BINS - 1]) as f64 / n };
    Histogram { fractions, extremes }
}

/// F1 of `score >= threshold` against the must-fire flags.
pub fn fire_f1(scores: &[f64], must_fire: &[bool], threshold: f64) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
    for (&s, &y) in scores.iter().zip(must_fire) {
        match (s >= threshold, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            _ => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    (2 * tp) as f64 / (2 * tp + fp + fneg) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleThreshold {
    pub threshold: f64,
    pub utility: f64,
    /// Utility was constant over every candidate, so the threshold is 0.5.
    pub degenerate: bool,
}

/// Utility-maximising threshold over the sorted unique scores; the lowest
/// maximiser wins ties.
pub fn oracle_threshold<U: Fn(&[f64], &[bool], f64) -> f64>(scores: &[f64], labels: &[bool], utility: &U) -> OracleThreshold {
    let mut cands: Vec<f64> = scores.to_vec();
    cands.sort_by(|a, b| a.total_cmp(b));
    cands.dedup();
    let mut best: Option<(f64, f64)> = None;
    let mut constant = true;
    let mut first: Option<f64> = None;
    for &t in &cands {
        let u = utility(scores, labels, t);
        match first {
            None => first = Some(u),
            Some(f) if f != u => constant = false,
            _ => {}
        }
        if best.map_or(true, |(_, bu)| u > bu) {
            best = Some((t, u));
        }
    }
    match best {
        Some((t, u)) if !constant => OracleThreshold { threshold: t, utility: u, degenerate: false },
        _ => OracleThreshold { threshold: 0.5, utility: first.unwrap_or(0.0), degenerate: true },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerStd {
    pub thresholds: Vec<OracleThreshold>,
    pub std: f64,
}

pub fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    // shifted by the first value so identical inputs give exactly 0
    let n = xs.len() as f64;
    let d: Vec<f64> = xs.iter().map(|x| x - xs[0]).collect();
    let mean = d.iter().sum::<f64>() / n;
    libm::sqrt(d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

pub fn trigger_std_with<U: Fn(&[f64], &[bool], f64) -> f64>(sets: &[(Vec<f64>, Vec<bool>)], utility: U) -> Result<TriggerStd> {
    if sets.len() < 2 {
        return Err(Error::TooFewScoreSets(sets.len()));
    }
    let thresholds: Vec<OracleThreshold> = sets.iter().map(|(s, l)| oracle_threshold(s, l, &utility)).collect();
    let xs: Vec<f64> = thresholds.iter().map(|t| t.threshold).collect();
    Ok(TriggerStd { std: population_std(&xs), thresholds })
}

/// Default utility: F1 of fire vs must-fire.
pub fn trigger_std(sets: &[(Vec<f64>, Vec<bool>)]) -> Result<TriggerStd> {
    trigger_std_with(sets, fire_f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    fn ev(score: f64, pos: bool) -> ScoredEvent {
        ScoredEvent { event_id: format!("{score}"), score, label: Label::from_bool(pos), gold: None }
    }

    #[test]
    fn auc_basics() {
        assert_eq!(auc(&[ev(0.9, true), ev(0.1, false)], PositiveDef::MFire).unwrap(), 1.0);
        assert_eq!(auc(&[ev(0.1, true), ev(0.9, false)], PositiveDef::MFire).unwrap(), 0.0);
        let tied = [ev(0.3, true), ev(0.3, false), ev(0.3, true), ev(0.3, false)];
        assert_eq!(auc(&tied, PositiveDef::MFire).unwrap(), 0.5);
        assert!(matches!(auc(&[ev(0.2, true)], PositiveDef::CSkip), Err(Error::DegenerateClass("c_skip"))));
    }

    #[test]
    fn auc_hand_set_of_eight() {
        let s = [
            ev(0.9, true),
            ev(0.8, false),
            ev(0.7, true),
            ev(0.7, false),
            ev(0.5, true),
            ev(0.4, false),
            ev(0.2, false),
            ev(0.1, true),
        ];
        // pairs won: 0.9→4, 0.7→2.5, 0.5→2, 0.1→0 = 8.5 of 16
        assert_eq!(auc(&s, PositiveDef::MFire).unwrap(), 8.5 / 16.0);
    }

    #[test]
    fn gold_definitions() {
        let mk = |score, gold| ScoredEvent { event_id: String::new(), score, label: Label::Negative, gold: Some(gold) };
        let s = [mk(0.9, GoldClassTag::MustFire), mk(0.6, GoldClassTag::CanSkip), mk(0.2, GoldClassTag::MustSkip)];
        assert_eq!(auc(&s, PositiveDef::MFire).unwrap(), 1.0);
        assert_eq!(auc(&s, PositiveDef::CSkip).unwrap(), 1.0);
        assert_eq!(auc(&s, PositiveDef::MSkip).unwrap(), 1.0);
        let unl = ScoredEvent { event_id: String::new(), score: 0.1, label: Label::Unlabeled, gold: None };
        assert_eq!(PositiveDef::MFire.classify(&unl), None);
    }

    #[test]
    fn brier_cases() {
        assert_eq!(brier(&[ev(1.0, true), ev(0.0, false)], PositiveDef::MFire).unwrap(), 0.0);
        assert_eq!(brier(&[ev(0.5, true), ev(0.5, false)], PositiveDef::MFire).unwrap(), 0.25);
        // (0.2)^2 + (0.4)^2 + (0.3)^2 + (0.9)^2 = 0.04 + 0.16 + 0.09 + 0.81 = 1.10
        let s = [ev(0.8, true), ev(0.4, false), ev(0.7, true), ev(0.9, false)];
        assert!((brier(&s, PositiveDef::MFire).unwrap() - 1.10 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn ece_cases() {
        let half = [ev(0.9, true), ev(0.9, false)];
        assert!((ece(&half, PositiveDef::MFire, 20).unwrap() - 0.4).abs() < 1e-12);
        let calibrated = [ev(0.0, false), ev(0.0, false), ev(1.0, true), ev(1.0, true)];
        assert_eq!(ece(&calibrated, PositiveDef::MFire, 20).unwrap(), 0.0);
        assert_eq!(bin_index(0.05, 20), 1);
        assert_eq!(bin_index(0.0, 20), 0);
        assert_eq!(bin_index(1.0, 20), 19);
        assert_eq!(bin_index(0.9499, 20), 18);
    }

    #[test]
    fn histogram_cases() {
        let h = score_histogram(&[0.5; 10]);
        assert_eq!(h.fractions[10], 1.0);
        assert_eq!(h.extremes, 0.0);
        assert_eq!(score_histogram(&[1.0, 1.0]).extremes, 1.0);
        let grid: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
        let h = score_histogram(&grid);
        assert!(h.fractions.iter().all(|&f| f == 2.0 / 40.0));
        assert!((h.fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((h.extremes - 0.1).abs() < 1e-12);
    }

    #[test]
    fn trigger_std_cases() {
        let a = (vec![0.1, 0.4, 0.6, 0.9], vec![false, true, true, true]);
        let same = trigger_std(&[a.clone(), a.clone(), a.clone()]).unwrap();
        assert_eq!(same.std, 0.0);
        assert_eq!(same.thresholds[0].threshold, 0.4);
        let b = (vec![0.1, 0.4, 0.6, 0.9], vec![false, false, true, true]);
        let two = trigger_std(&[a, b]).unwrap();
        assert!((two.std - 0.1).abs() < 1e-12);
        let flat = (vec![0.2, 0.7], vec![false, false]);
        let r = trigger_std(&[flat.clone(), flat]).unwrap();
        assert!(r.thresholds.iter().all(|t| t.degenerate && t.threshold == 0.5));
        assert!(matches!(trigger_std(&[(vec![0.1], vec![true])]), Err(Error::TooFewScoreSets(1))));
    }

    #[test]
    fn lowest_threshold_wins_ties() {
        let scores = [0.3, 0.5, 0.8];
        let labels = [true, false, true];
        let peaked = |_: &[f64], _: &[bool], t: f64| if t == 0.3 || t == 0.5 { 1.0 } else { 0.0 };
        assert_eq!(oracle_threshold(&scores, &labels, &peaked).threshold, 0.3);
        // default F1: 0.3 fires all three (F1 0.8), the best candidate
        assert_eq!(oracle_threshold(&scores, &labels, &fire_f1).threshold, 0.3);
    }
}
