//! Diarization error rate and pairwise clustering F1.
//!
//! DER is computed region by region on integer milliseconds: the timeline
//! is cut at every segment and exclusion boundary, each surviving region
//! contributes `max(ref_count, hyp_count) - matched` error time, and the
//! denominator is the reference speech time inside scored regions. The
//! speaker mapping is an exact maximum-overlap assignment, never greedy.
//! The collar excises `+-collar` around every segment boundary on either
//! side; `score_overlap = false` additionally drops regions where two or
//! more reference speakers are active.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::data::RttmRecord;
use crate::{Error, Result};

/// Accumulated DER components in milliseconds. `scored_ref_ms` weights each
/// region by its active reference speaker count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DerBreakdown {
    pub missed_ms: i64,
    pub false_alarm_ms: i64,
    pub confusion_ms: i64,
    pub scored_ref_ms: i64,
}

impl DerBreakdown {
    pub fn error_ms(&self) -> i64 {
        self.missed_ms + self.false_alarm_ms + self.confusion_ms
    }

    /// DER in percent. Zero when nothing is scored and nothing is wrong.
    pub fn percent(&self) -> f64 {
        if self.scored_ref_ms == 0 {
            0.0
        } else {
            100.0 * self.error_ms() as f64 / self.scored_ref_ms as f64
        }
    }

    fn add(&mut self, other: &DerBreakdown) {
        self.missed_ms += other.missed_ms;
        self.false_alarm_ms += other.false_alarm_ms;
        self.confusion_ms += other.confusion_ms;
        self.scored_ref_ms += other.scored_ref_ms;
    }
}

fn to_ms(seconds: f64) -> i64 {
    (seconds * 1000.0).round() as i64
}

fn merge_intervals(mut intervals: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    intervals.sort_unstable();
    let mut merged: Vec<(i64, i64)> = Vec::new();
    for (start, end) in intervals {
        if let Some(last) = merged.last_mut() {
            if start <= last.1 {
                last.1 = last.1.max(end);
                continue;
            }
        }
        merged.push((start, end));
    }
    merged
}

/// True iff `[start, end)` lies inside one of the merged `intervals`.
/// Region boundaries include every interval endpoint, so containment of the
/// start implies containment of the whole region.
fn covers(intervals: &[(i64, i64)], start: i64, end: i64) -> bool {
    let idx = intervals.partition_point(|&(a, _)| a <= start);
    idx > 0 && intervals[idx - 1].1 >= end
}

/// Exact minimum-cost square assignment (potentials method). `cost` is
/// n x n; returns the column assigned to each row.
fn min_cost_assignment(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    const INF: i64 = i64::MAX / 4;
    // 1-indexed potentials over rows (u) and columns (v).
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut assigned_row = vec![0usize; n + 1]; // per column
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        assigned_row[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![INF; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut result = vec![0usize; n];
    for j in 1..=n {
        result[assigned_row[j] - 1] = j - 1;
    }
    result
}

/// Maximum-weight one-to-one matching between `rows x cols` non-negative
/// weights. Returns, per row, the matched column (only pairs with positive
/// weight count as matched).
pub(crate) fn max_weight_assignment(weights: &[Vec<i64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let cost: Vec<Vec<i64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i < rows && j < cols {
                        -weights[i][j]
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    let assignment = min_cost_assignment(&cost);
    (0..rows)
        .map(|i| {
            let j = assignment[i];
            (j < cols && weights[i][j] > 0).then_some(j)
        })
        .collect()
}

/// One atomic scored region: duration and the active speakers on each side.
struct Region {
    dur: i64,
    ref_active: Vec<usize>,
    hyp_active: Vec<usize>,
}

fn speaker_index<'a>(names: &mut Vec<&'a str>, name: &'a str) -> usize {
    match names.iter().position(|&n| n == name) {
        Some(i) => i,
        None => {
            names.push(name);
            names.len() - 1
        }
    }
}

fn score_recording(
    refs: &[&RttmRecord],
    hyps: &[&RttmRecord],
    collar_ms: i64,
    score_overlap: bool,
) -> DerBreakdown {
    // Per-speaker merged activity intervals.
    let mut ref_names: Vec<&str> = Vec::new();
    let mut hyp_names: Vec<&str> = Vec::new();
    let mut ref_raw: Vec<Vec<(i64, i64)>> = Vec::new();
    let mut hyp_raw: Vec<Vec<(i64, i64)>> = Vec::new();
    let mut exclusions: Vec<(i64, i64)> = Vec::new();
    for r in refs {
        let spk = speaker_index(&mut ref_names, &r.speaker);
        if spk == ref_raw.len() {
            ref_raw.push(Vec::new());
        }
        ref_raw[spk].push((to_ms(r.onset), to_ms(r.end())));
    }
    for h in hyps {
        let spk = speaker_index(&mut hyp_names, &h.speaker);
        if spk == hyp_raw.len() {
            hyp_raw.push(Vec::new());
        }
        hyp_raw[spk].push((to_ms(h.onset), to_ms(h.end())));
    }
    if collar_ms > 0 {
        for r in refs.iter().copied().chain(hyps.iter().copied()) {
            for b in [to_ms(r.onset), to_ms(r.end())] {
                exclusions.push((b - collar_ms, b + collar_ms));
            }
        }
    }
    let ref_spk: Vec<Vec<(i64, i64)>> = ref_raw.into_iter().map(merge_intervals).collect();
    let hyp_spk: Vec<Vec<(i64, i64)>> = hyp_raw.into_iter().map(merge_intervals).collect();
    let exclusions = merge_intervals(exclusions);

    // Atomic region boundaries.
    let mut bounds: Vec<i64> = Vec::new();
    for list in ref_spk.iter().chain(hyp_spk.iter()) {
        for &(a, b) in list {
            bounds.push(a);
            bounds.push(b);
        }
    }
    for &(a, b) in &exclusions {
        bounds.push(a);
        bounds.push(b);
    }
    bounds.sort_unstable();
    bounds.dedup();

    let mut regions = Vec::new();
    for w in bounds.windows(2) {
        let (start, end) = (w[0], w[1]);
        if start >= end || covers(&exclusions, start, end) {
            continue;
        }
        let ref_active: Vec<usize> = (0..ref_spk.len())
            .filter(|&s| covers(&ref_spk[s], start, end))
            .collect();
        if !score_overlap && ref_active.len() >= 2 {
            continue;
        }
        let hyp_active: Vec<usize> = (0..hyp_spk.len())
            .filter(|&s| covers(&hyp_spk[s], start, end))
            .collect();
        if ref_active.is_empty() && hyp_active.is_empty() {
            continue;
        }
        regions.push(Region {
            dur: end - start,
            ref_active,
            hyp_active,
        });
    }

    // Optimal speaker mapping from scored co-activity.
    let mut overlap = vec![vec![0i64; hyp_spk.len()]; ref_spk.len()];
    for region in &regions {
        for &r in &region.ref_active {
            for &h in &region.hyp_active {
                overlap[r][h] += region.dur;
            }
        }
    }
    let mapping = max_weight_assignment(&overlap);

    let mut out = DerBreakdown::default();
    for region in &regions {
        let nref = region.ref_active.len() as i64;
        let nhyp = region.hyp_active.len() as i64;
        let matched = region
            .ref_active
            .iter()
            .filter(|&&r| {
                mapping[r].is_some_and(|h| region.hyp_active.contains(&h))
            })
            .count() as i64;
        out.scored_ref_ms += region.dur * nref;
        out.missed_ms += region.dur * (nref - nhyp).max(0);
        out.false_alarm_ms += region.dur * (nhyp - nref).max(0);
        out.confusion_ms += region.dur * (nref.min(nhyp) - matched);
    }
    out
}

fn group_by_recording(records: &[RttmRecord]) -> BTreeMap<&str, Vec<&RttmRecord>> {
    let mut map: BTreeMap<&str, Vec<&RttmRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.recording_id.as_str()).or_default().push(r);
    }
    map
}

/// Per-recording DER components under one condition. Requires the same
/// recording-id set on both sides and a non-empty reference.
pub fn per_recording_der(
    refs: &[RttmRecord],
    hyps: &[RttmRecord],
    collar: f64,
    score_overlap: bool,
) -> Result<Vec<(String, DerBreakdown)>> {
    if refs.is_empty() {
        return Err(Error::EmptyReference);
    }
    let ref_groups = group_by_recording(refs);
    let hyp_groups = group_by_recording(hyps);
    let ref_ids: Vec<&str> = ref_groups.keys().copied().collect();
    let hyp_ids: Vec<&str> = hyp_groups.keys().copied().collect();
    if ref_ids != hyp_ids {
        let only_ref: Vec<&&str> = ref_ids.iter().filter(|id| !hyp_ids.contains(id)).collect();
        let only_hyp: Vec<&&str> = hyp_ids.iter().filter(|id| !ref_ids.contains(id)).collect();
        return Err(Error::RecordingMismatch {
            detail: format!("only in reference: {only_ref:?}; only in hypothesis: {only_hyp:?}"),
        });
    }
    let collar_ms = to_ms(collar);
    let pairs: Vec<(&str, &Vec<&RttmRecord>, &Vec<&RttmRecord>)> = ref_ids
        .iter()
        .map(|id| (*id, &ref_groups[id], &hyp_groups[id]))
        .collect();
    Ok(pairs
        .par_iter()
        .map(|(id, r, h)| {
            (
                id.to_string(),
                score_recording(r, h, collar_ms, score_overlap),
            )
        })
        .collect())
}

/// Corpus DER components: per-recording components summed (time-weighted).
pub fn der_breakdown(
    refs: &[RttmRecord],
    hyps: &[RttmRecord],
    collar: f64,
    score_overlap: bool,
) -> Result<DerBreakdown> {
    let mut total = DerBreakdown::default();
    for (_, b) in per_recording_der(refs, hyps, collar, score_overlap)? {
        total.add(&b);
    }
    if total.scored_ref_ms == 0 && total.error_ms() > 0 {
        return Err(Error::EmptyReference);
    }
    Ok(total)
}

/// Corpus DER in percent.
pub fn der(
    refs: &[RttmRecord],
    hyps: &[RttmRecord],
    collar: f64,
    score_overlap: bool,
) -> Result<f64> {
    der_breakdown(refs, hyps, collar, score_overlap).map(|b| b.percent())
}

/// Text report with per-recording and corpus DER under both standard
/// conditions: overlaps scored without a collar, and overlaps ignored with
/// a 0.25 s collar.
pub fn der_report(refs: &[RttmRecord], hyps: &[RttmRecord]) -> Result<String> {
    let fair = per_recording_der(refs, hyps, 0.0, true)?;
    let lenient = per_recording_der(refs, hyps, 0.25, false)?;
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>16} {:>22}\n",
        "recording", "DER% (ovl, 0s)", "DER% (no ovl, 0.25s)"
    ));
    let mut fair_total = DerBreakdown::default();
    let mut lenient_total = DerBreakdown::default();
    for ((id, f), (_, l)) in fair.iter().zip(&lenient) {
        out.push_str(&format!("{id:<24} {:>16.2} {:>22.2}\n", f.percent(), l.percent()));
        fair_total.add(f);
        lenient_total.add(l);
    }
    out.push_str(&format!(
        "{:<24} {:>16.2} {:>22.2}\n",
        "corpus",
        fair_total.percent(),
        lenient_total.percent()
    ));
    Ok(out)
}

/// F1 over all unordered node pairs, positives being same-cluster pairs.
/// Zero true positives give F1 = 0 unless both partitions are all
/// singletons (perfect agreement).
pub fn pairwise_f1(truth: &[usize], pred: &[usize]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::ShapeMismatch {
            context: "pairwise_f1 labels",
            expected: format!("{} entries", truth.len()),
            actual: format!("{} entries", pred.len()),
        });
    }
    let pairs = |counts: &BTreeMap<usize, i64>| -> i64 {
        counts.values().map(|&c| c * (c - 1) / 2).sum()
    };
    let mut truth_counts = BTreeMap::new();
    let mut pred_counts = BTreeMap::new();
    let mut joint_counts: BTreeMap<(usize, usize), i64> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(pred) {
        *truth_counts.entry(t).or_insert(0) += 1;
        *pred_counts.entry(p).or_insert(0) += 1;
        *joint_counts.entry((t, p)).or_insert(0) += 1;
    }
    let same_truth = pairs(&truth_counts);
    let same_pred = pairs(&pred_counts);
    let tp: i64 = joint_counts.values().map(|&c| c * (c - 1) / 2).sum();
    let fp = same_pred - tp;
    let fn_ = same_truth - tp;
    if same_truth == 0 && same_pred == 0 {
        return Ok(1.0);
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fn_ as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rec(id: &str, onset: f64, duration: f64, speaker: &str) -> RttmRecord {
        RttmRecord {
            recording_id: id.into(),
            onset,
            duration,
            speaker: speaker.into(),
        }
    }

    #[test]
    fn identical_hypothesis_scores_zero() {
        let refs = vec![rec("r", 0.0, 10.0, "A"), rec("r", 12.0, 3.0, "B")];
        assert_eq!(der(&refs, &refs, 0.0, true).unwrap(), 0.0);
        assert_eq!(der(&refs, &refs, 0.25, false).unwrap(), 0.0);
    }

    #[test]
    fn one_second_confusion_over_ten_is_ten_percent() {
        let refs = vec![rec("r", 0.0, 10.0, "A")];
        let hyps = vec![rec("r", 0.0, 9.0, "A"), rec("r", 9.0, 1.0, "B")];
        let b = der_breakdown(&refs, &hyps, 0.0, true).unwrap();
        assert_eq!(b.confusion_ms, 1000);
        assert_eq!(b.missed_ms, 0);
        assert_eq!(b.false_alarm_ms, 0);
        assert_abs_diff_eq!(b.percent(), 10.0, epsilon = 1e-12);
    }

    #[test]
    fn collar_excises_both_sides_boundaries() {
        // Boundaries at 0 and 10 (reference) and 9 (hypothesis) each lose
        // +-0.25 s: the denominator shrinks to 9 s and the scored confusion
        // to [9.25, 9.75).
        let refs = vec![rec("r", 0.0, 10.0, "A")];
        let hyps = vec![rec("r", 0.0, 9.0, "A"), rec("r", 9.0, 1.0, "B")];
        let b = der_breakdown(&refs, &hyps, 0.25, true).unwrap();
        assert_eq!(b.scored_ref_ms, 9000);
        assert_eq!(b.confusion_ms, 500);
        assert_abs_diff_eq!(b.percent(), 100.0 * 0.5 / 9.0, epsilon = 1e-9);
    }

    #[test]
    fn missed_and_false_alarm_are_separated() {
        let refs = vec![rec("r", 0.0, 10.0, "A")];
        let short = vec![rec("r", 0.0, 8.0, "A")];
        let b = der_breakdown(&refs, &short, 0.0, true).unwrap();
        assert_eq!((b.missed_ms, b.false_alarm_ms, b.confusion_ms), (2000, 0, 0));
        assert_abs_diff_eq!(b.percent(), 20.0, epsilon = 1e-12);

        let long = vec![rec("r", 0.0, 12.0, "A")];
        let b = der_breakdown(&refs, &long, 0.0, true).unwrap();
        assert_eq!((b.missed_ms, b.false_alarm_ms, b.confusion_ms), (0, 2000, 0));
    }

    #[test]
    fn overlap_flag_drops_multi_speaker_reference_regions() {
        let refs = vec![rec("r", 0.0, 10.0, "A"), rec("r", 8.0, 4.0, "B")];
        let hyps = vec![rec("r", 0.0, 10.0, "A"), rec("r", 10.0, 2.0, "B")];
        // Overlaps scored: [8, 10) has two reference speakers but one
        // hypothesis speaker, so 2 s are missed.
        let b = der_breakdown(&refs, &hyps, 0.0, true).unwrap();
        assert_eq!(b.scored_ref_ms, 14_000);
        assert_eq!((b.missed_ms, b.false_alarm_ms, b.confusion_ms), (2000, 0, 0));
        // Overlaps ignored: the region disappears entirely.
        let b = der_breakdown(&refs, &hyps, 0.0, false).unwrap();
        assert_eq!(b.scored_ref_ms, 10_000);
        assert_eq!(b.error_ms(), 0);
    }

    #[test]
    fn der_is_invariant_to_hypothesis_speaker_names() {
        let refs = vec![
            rec("r", 0.0, 5.0, "A"),
            rec("r", 5.0, 5.0, "B"),
            rec("r", 10.0, 5.0, "C"),
        ];
        let hyps = vec![
            rec("r", 0.0, 5.5, "x"),
            rec("r", 5.5, 4.5, "y"),
            rec("r", 10.0, 5.0, "z"),
        ];
        let d1 = der(&refs, &hyps, 0.0, true).unwrap();
        let renamed: Vec<RttmRecord> = hyps
            .iter()
            .map(|h| RttmRecord {
                speaker: format!("spk_{}", h.speaker.to_uppercase()),
                ..h.clone()
            })
            .collect();
        let d2 = der(&refs, &renamed, 0.0, true).unwrap();
        assert_eq!(d1.to_bits(), d2.to_bits());
    }

    #[test]
    fn self_scoring_random_references_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let mut refs = Vec::new();
            let mut t = 0.0;
            for _ in 0..rng.gen_range(1..12) {
                let dur = rng.gen_range(0.4..4.0);
                let spk = format!("s{}", rng.gen_range(0..4));
                refs.push(rec("r", t, dur, &spk));
                // Occasional overlap with the previous turn.
                t += dur - rng.gen_range(0.0..0.3);
            }
            let collar = rng.gen_range(0.0..0.6);
            let overlap: bool = rng.gen();
            assert_eq!(der(&refs, &refs, collar, overlap).unwrap(), 0.0);
        }
    }

    #[test]
    fn mapping_is_recomputed_exactly_not_greedily() {
        // Overlaps: A-v 2 s, A-u 4 s, B-u 4 s, B-v 0. Greedy takes A-u
        // first (ties at 4 s) and strands B with v for 4 s matched total;
        // the optimal one-to-one map is A-v + B-u = 6 s. Confusion is the
        // 10 s of speech minus the matched 6 s.
        let refs = vec![rec("r", 0.0, 6.0, "A"), rec("r", 6.0, 4.0, "B")];
        let hyps = vec![rec("r", 0.0, 2.0, "v"), rec("r", 2.0, 8.0, "u")];
        let b = der_breakdown(&refs, &hyps, 0.0, true).unwrap();
        assert_eq!(b.confusion_ms, 4000);
    }

    #[test]
    fn assignment_matches_permutation_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..200 {
            let rows = rng.gen_range(1..6);
            let cols = rng.gen_range(1..6);
            let w: Vec<Vec<i64>> = (0..rows)
                .map(|_| (0..cols).map(|_| rng.gen_range(0..50)).collect())
                .collect();
            let got = max_weight_assignment(&w);
            let got_total: i64 = got
                .iter()
                .enumerate()
                .filter_map(|(i, j)| j.map(|j| w[i][j]))
                .sum();

            // Brute force over every injective map between the sides.
            let mut best = 0i64;
            let mut rp: Vec<usize> = (0..rows).collect();
            permute(&mut rp, 0, &mut |rperm| {
                let mut cp: Vec<usize> = (0..cols).collect();
                permute(&mut cp, 0, &mut |cperm| {
                    let total: i64 = (0..rows.min(cols)).map(|k| w[rperm[k]][cperm[k]]).sum();
                    best = best.max(total);
                });
            });
            assert_eq!(got_total, best, "case {case}: weights {w:?}");
        }
    }

    fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
        if k == items.len() {
            visit(items);
            return;
        }
        for i in k..items.len() {
            items.swap(k, i);
            permute(items, k + 1, visit);
            items.swap(k, i);
        }
    }

    #[test]
    fn mismatched_recording_sets_error_out() {
        let refs = vec![rec("a", 0.0, 1.0, "A")];
        let hyps = vec![rec("b", 0.0, 1.0, "A")];
        assert!(matches!(
            der(&refs, &hyps, 0.0, true).unwrap_err(),
            Error::RecordingMismatch { .. }
        ));
    }

    #[test]
    fn empty_reference_errors_out() {
        let hyps = vec![rec("r", 0.0, 1.0, "A")];
        assert!(matches!(
            der(&[], &hyps, 0.0, true).unwrap_err(),
            Error::EmptyReference
        ));
    }

    #[test]
    fn identical_partitions_score_one() {
        assert_eq!(pairwise_f1(&[0, 0, 1, 1, 2], &[2, 2, 0, 0, 1]).unwrap(), 1.0);
        assert_eq!(pairwise_f1(&[0, 1, 2], &[5, 6, 7]).unwrap(), 1.0);
    }

    #[test]
    fn all_singletons_against_one_cluster_scores_zero() {
        assert_eq!(pairwise_f1(&[0, 0, 0, 0], &[0, 1, 2, 3]).unwrap(), 0.0);
    }

    #[test]
    fn six_node_confusion_matches_exhaustive_pairs() {
        let truth = [0, 0, 0, 1, 1, 1];
        let pred = [0, 0, 1, 1, 1, 2];
        let f1 = pairwise_f1(&truth, &pred).unwrap();

        // Oracle: scan all 15 unordered pairs.
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for i in 0..6 {
            for j in (i + 1)..6 {
                let same_t = truth[i] == truth[j];
                let same_p = pred[i] == pred[j];
                match (same_t, same_p) {
                    (true, true) => tp += 1.0,
                    (false, true) => fp += 1.0,
                    (true, false) => fn_ += 1.0,
                    (false, false) => {}
                }
            }
        }
        let precision = tp / (tp + fp);
        let recall = tp / (tp + fn_);
        let expect = 2.0 * precision * recall / (precision + recall);
        assert_abs_diff_eq!(f1, expect, epsilon = 1e-12);
    }

    #[test]
    fn f1_is_stable_under_consistent_relabeling() {
        let truth = [0, 1, 1, 2, 2, 2, 0];
        let pred = [3, 3, 1, 1, 2, 2, 0];
        let f1 = pairwise_f1(&truth, &pred).unwrap();
        let relabel_t: Vec<usize> = truth.iter().map(|&t| 10 - t).collect();
        let relabel_p: Vec<usize> = pred.iter().map(|&p| p + 7).collect();
        let f2 = pairwise_f1(&relabel_t, &relabel_p).unwrap();
        assert_eq!(f1.to_bits(), f2.to_bits());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(pairwise_f1(&[0, 1], &[0]).is_err());
    }
}
