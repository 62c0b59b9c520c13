//! Threshold-free ranking metrics over anomaly scores.
//!
//! Out-of-domain is the positive class and a higher anomaly score means "more
//! out-of-domain" everywhere in this module. Ties are always processed as a
//! group so that no metric depends on input order.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::store::{Domain, LabelSet, ScoreSet};

/// Scores split by ground-truth domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledScores {
    in_scores: Vec<f64>,
    out_scores: Vec<f64>,
}

impl LabeledScores {
    pub fn new(in_scores: Vec<f64>, out_scores: Vec<f64>) -> Result<Self> {
        if in_scores.is_empty() || out_scores.is_empty() {
            bail!(
                Data,
                "need both in and out labels (got {} in, {} out)",
                in_scores.len(),
                out_scores.len()
            );
        }
        if in_scores.iter().chain(&out_scores).any(|v| !v.is_finite()) {
            bail!(Invariant, "scores must be finite");
        }
        Ok(Self {
            in_scores,
            out_scores,
        })
    }

    /// Joins scores and labels on id; ids missing from either side are skipped.
    pub fn join(scores: &ScoreSet, labels: &LabelSet) -> Result<Self> {
        let mut ins = Vec::new();
        let mut outs = Vec::new();
        for (id, score) in scores.iter() {
            match labels.get(id) {
                Some(Domain::In) => ins.push(score),
                Some(Domain::Out) => outs.push(score),
                None => {}
            }
        }
        Self::new(ins, outs)
    }

    pub fn in_scores(&self) -> &[f64] {
        &self.in_scores
    }

    pub fn out_scores(&self) -> &[f64] {
        &self.out_scores
    }

    /// Swaps the classes and negates every score.
    pub fn flipped(&self) -> Self {
        Self {
            in_scores: self.out_scores.iter().map(|v| -v).collect(),
            out_scores: self.in_scores.iter().map(|v| -v).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            in_scores: self.in_scores.iter().map(|&v| f(v)).collect(),
            out_scores: self.out_scores.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// One run of equal scores: `(score, #in, #out)`.
type Group = (f64, usize, usize);

/// Tie groups in ascending score order.
fn groups(ls: &LabeledScores) -> Vec<Group> {
    let mut all: Vec<(f64, bool)> = ls
        .in_scores
        .iter()
        .map(|&s| (s, false))
        .chain(ls.out_scores.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Group> = Vec::new();
    for (s, is_out) in all {
        match out.last_mut() {
            Some(g) if g.0 == s => {
                if is_out {
                    g.2 += 1
                } else {
                    g.1 += 1
                }
            }
            _ => out.push((s, usize::from(!is_out), usize::from(is_out))),
        }
    }
    out
}

/// Mann-Whitney statistic: P(out > in) + ½ P(out = in).
pub fn auroc(ls: &LabeledScores) -> f64 {
    let mut in_below = 0usize;
    let mut total = 0.0;
    for (_, n_in, n_out) in groups(ls) {
        total += n_out as f64 * (in_below as f64 + 0.5 * n_in as f64);
        in_below += n_in;
    }
    total / (ls.in_scores.len() as f64 * ls.out_scores.len() as f64)
}

/// Best balanced accuracy `½·TNR + ½·TPR` over thresholds, predicting "in" for `score <= ε`.
pub fn dtacc(ls: &LabeledScores) -> f64 {
    let n_in = ls.in_scores.len() as f64;
    let n_out = ls.out_scores.len() as f64;
    // ε = -inf: nothing is called in-domain.
    let mut best: f64 = 0.5;
    let mut in_le = 0usize;
    let mut out_le = 0usize;
    for (_, gi, go) in groups(ls) {
        in_le += gi;
        out_le += go;
        let acc = 0.5 * (in_le as f64 / n_in) + 0.5 * ((n_out - out_le as f64) / n_out);
        best = best.max(acc);
    }
    best
}

/// Area under the precision-recall step curve, `Σ (R_i - R_{i-1}) P_i`, over
/// thresholds in descending order of the ranking score.
///
/// `Domain::Out` ranks by anomaly score with out-of-domain positive (AUOUT);
/// `Domain::In` ranks by negated score with in-domain positive (AUIN).
pub fn aupr(ls: &LabeledScores, positive: Domain) -> f64 {
    let mut gs = groups(ls);
    let positives = match positive {
        Domain::Out => {
            gs.reverse();
            ls.out_scores.len()
        }
        Domain::In => ls.in_scores.len(),
    };
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut area = 0.0;
    for (_, n_in, n_out) in gs {
        let (pos, neg) = match positive {
            Domain::Out => (n_out, n_in),
            Domain::In => (n_in, n_out),
        };
        if pos > 0 {
            tp += pos;
            fp += neg;
            let precision = tp as f64 / (tp + fp) as f64;
            area += pos as f64 / positives as f64 * precision;
        } else {
            fp += neg;
        }
    }
    area
}

/// ROC points `(fpr, tpr)` from `(0,0)` to `(1,1)`, one per distinct threshold.
pub fn roc_curve(ls: &LabeledScores) -> Vec<(f64, f64)> {
    let n_in = ls.in_scores.len() as f64;
    let n_out = ls.out_scores.len() as f64;
    let mut points = vec![(0.0, 0.0)];
    let (mut fp, mut tp) = (0usize, 0usize);
    for (_, gi, go) in groups(ls).into_iter().rev() {
        fp += gi;
        tp += go;
        points.push((fp as f64 / n_in, tp as f64 / n_out));
    }
    points
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count_in: usize,
    pub count_out: usize,
}

/// Equal-width bins over `[min, max]` of all scores; the last bin is closed.
pub fn score_histogram(ls: &LabeledScores, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        bail!(Config, "histogram needs at least one bin");
    }
    let all = ls.in_scores.iter().chain(&ls.out_scores);
    let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: lo + width * b as f64,
            hi: if b + 1 == bins { hi } else { lo + width * (b + 1) as f64 },
            count_in: 0,
            count_out: 0,
        })
        .collect();
    let index = |s: f64| -> usize {
        if width > 0.0 {
            (((s - lo) / width) as usize).min(bins - 1)
        } else {
            0
        }
    };
    for &s in &ls.in_scores {
        out[index(s)].count_in += 1;
    }
    for &s in &ls.out_scores {
        out[index(s)].count_out += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub dtacc: f64,
    pub auin: f64,
    pub auout: f64,
    pub n_in: usize,
    pub n_out: usize,
    pub roc_points: Vec<(f64, f64)>,
    pub histogram: Vec<HistogramBin>,
}

impl EvalReport {
    pub fn compute(ls: &LabeledScores, bins: usize) -> Result<Self> {
        Ok(Self {
            auroc: auroc(ls),
            dtacc: dtacc(ls),
            auin: aupr(ls, Domain::In),
            auout: aupr(ls, Domain::Out),
            n_in: ls.in_scores.len(),
            n_out: ls.out_scores.len(),
            roc_points: roc_curve(ls),
            histogram: score_histogram(ls, bins)?,
        })
    }

    pub fn write_roc_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["fpr", "tpr"])?;
        for (fpr, tpr) in &self.roc_points {
            w.write_record([fpr.to_string(), tpr.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_histogram_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(["bin_lo", "bin_hi", "count_in", "count_out"])?;
        for b in &self.histogram {
            w.write_record([
                b.lo.to_string(),
                b.hi.to_string(),
                b.count_in.to_string(),
                b.count_out.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
