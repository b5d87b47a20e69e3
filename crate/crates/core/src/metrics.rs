//! Fairness metrics over membership-inference outcomes: equal-opportunity
//! disparity, vulnerability disparity (VD), its relative change under DP,
//! and the per-probability-bin breakdown of member recall.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::GroupTag;
use crate::scalar::Proportion;

pub const BIN_COUNT: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("group {0:?} has no records with a positive label")]
    EmptyGroup(GroupTag),
    #[error("input lists have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("probability {0} is outside [0, 1]")]
    Probability(f64),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// One true member seen by the attack.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberOutcome {
    pub predicted_member: bool,
    pub group: GroupTag,
    /// Target-model probability of the record's true class.
    pub probability: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VdInput {
    pub members: Vec<MemberOutcome>,
}

impl VdInput {
    /// Pairs evaluation-member inferences with their group tags.
    pub fn from_inferences<T: crate::scalar::Real>(
        inferences: &[crate::mia::Inference<T>],
        groups: &[GroupTag],
    ) -> Result<Self> {
        if inferences.len() != groups.len() {
            return Err(MetricsError::LengthMismatch(inferences.len(), groups.len()));
        }
        let members = inferences
            .iter()
            .zip(groups)
            .map(|(inf, &group)| MemberOutcome {
                predicted_member: inf.predicted_member,
                group,
                probability: inf.probs[inf.true_class].as_f64(),
            })
            .collect();
        Ok(VdInput { members })
    }

    pub fn swapped(&self) -> Self {
        let members = self.members.iter().map(|m| MemberOutcome { group: m.group.swapped(), ..*m }).collect();
        VdInput { members }
    }

    /// `(members, predicted members)` per group, protected first.
    fn tallies(&self) -> [(usize, usize); 2] {
        let mut t = [(0, 0); 2];
        for m in &self.members {
            let g = &mut t[m.group.index()];
            g.0 += 1;
            g.1 += usize::from(m.predicted_member);
        }
        t
    }
}

fn group_recall<P: Proportion>(tally: (usize, usize), tag: GroupTag) -> Result<P> {
    if tally.0 == 0 {
        return Err(MetricsError::EmptyGroup(tag));
    }
    Ok(P::from_counts(tally.1, tally.0))
}

/// `P(ŷ=1 | a, y=1) − P(ŷ=1 | ā, y=1)`.
pub fn disparity_di<P: Proportion>(predictions: &[bool], truths: &[bool], groups: &[GroupTag]) -> Result<P> {
    if predictions.len() != truths.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), truths.len()));
    }
    if predictions.len() != groups.len() {
        return Err(MetricsError::LengthMismatch(predictions.len(), groups.len()));
    }
    let mut t = [(0usize, 0usize); 2];
    for ((&p, &y), &g) in predictions.iter().zip(truths).zip(groups) {
        if y {
            t[g.index()].0 += 1;
            t[g.index()].1 += usize::from(p);
        }
    }
    let a: P = group_recall(t[0], GroupTag::Protected)?;
    let b: P = group_recall(t[1], GroupTag::Unprotected)?;
    Ok(a - b)
}

/// `recall(a) − recall(ā)` over true members.
pub fn vulnerability_disparity<P: Proportion>(input: &VdInput) -> Result<P> {
    let t = input.tallies();
    let a: P = group_recall(t[0], GroupTag::Protected)?;
    let b: P = group_recall(t[1], GroupTag::Unprotected)?;
    Ok(a - b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Change<P> {
    Relative(P),
    /// The baseline VD was exactly zero, so no relative change exists.
    BaselineZero,
}

impl<P: Proportion> Change<P> {
    pub fn value(&self) -> Option<&P> {
        match self {
            Change::Relative(c) => Some(c),
            Change::BaselineZero => None,
        }
    }
}

/// `c = (after − before) / before`; negative means the disparity shrank.
pub fn vd_change<P: Proportion>(before: &P, after: &P) -> Change<P> {
    if before.is_zero() {
        Change::BaselineZero
    } else {
        Change::Relative((after.clone() - before.clone()) / before.clone())
    }
}

/// Bin `r` covers `[r/10, (r+1)/10)`; the last bin also takes 1.0.
pub fn bin_of(p: f64) -> usize {
    let mut r = ((p * BIN_COUNT as f64).floor() as usize).min(BIN_COUNT - 1);
    // Guard against the product rounding across a boundary.
    if r > 0 && p < r as f64 / BIN_COUNT as f64 {
        r -= 1;
    } else if r + 1 < BIN_COUNT && p >= (r + 1) as f64 / BIN_COUNT as f64 {
        r += 1;
    }
    r
}

pub fn bin_bounds(r: usize) -> (f64, f64) {
    (r as f64 / BIN_COUNT as f64, (r + 1) as f64 / BIN_COUNT as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupBins<P> {
    pub members: usize,
    pub predicted_members: usize,
    /// Predicted members per bin.
    pub counts: [usize; BIN_COUNT],
    /// `counts[r] / members`; sums to the group's recall.
    pub recalls: Vec<P>,
    /// `counts[r] / predicted_members`; sums to 1 unless `no_positives`.
    pub shares: Vec<P>,
    pub no_positives: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VdReport<P> {
    pub vd: P,
    pub vd_dp: Option<P>,
    pub change_c: Option<Change<P>>,
    /// Indexed by [`GroupTag::index`].
    pub groups: [GroupBins<P>; 2],
}

fn group_bins<P: Proportion>(input: &VdInput, tag: GroupTag) -> GroupBins<P> {
    let mut counts = [0usize; BIN_COUNT];
    let mut members = 0;
    for m in input.members.iter().filter(|m| m.group == tag) {
        members += 1;
        if m.predicted_member {
            counts[bin_of(m.probability)] += 1;
        }
    }
    let predicted_members: usize = counts.iter().sum();
    let no_positives = predicted_members == 0;
    let ratio = |num: usize, den: usize| if den == 0 { P::zero() } else { P::from_counts(num, den) };
    GroupBins {
        members,
        predicted_members,
        counts,
        recalls: counts.iter().map(|&c| ratio(c, members)).collect(),
        shares: counts.iter().map(|&c| ratio(c, predicted_members)).collect(),
        no_positives,
    }
}

/// Per-bin recall table for both groups, with VD filled in.
pub fn recall_by_bin<P: Proportion>(input: &VdInput) -> Result<VdReport<P>> {
    for m in &input.members {
        if !(0.0..=1.0).contains(&m.probability) {
            return Err(MetricsError::Probability(m.probability));
        }
    }
    let vd = vulnerability_disparity(input)?;
    Ok(VdReport {
        vd,
        vd_dp: None,
        change_c: None,
        groups: [group_bins(input, GroupTag::Protected), group_bins(input, GroupTag::Unprotected)],
    })
}

impl<P: Proportion> VdReport<P> {
    /// Records the VD of a DP pipeline run against the same baseline.
    pub fn with_dp(mut self, vd_dp: P) -> Self {
        self.change_c = Some(vd_change(&self.vd, &vd_dp));
        self.vd_dp = Some(vd_dp);
        self
    }

    /// `Σ_r (recall_r(a) − recall_r(ā))`, which equals `vd`.
    pub fn bin_difference_sum(&self) -> P {
        let [a, b] = &self.groups;
        a.recalls
            .iter()
            .zip(&b.recalls)
            .fold(P::zero(), |acc, (x, y)| acc + x.clone() - y.clone())
    }

    /// Plot-ready rows: `bin_lo,bin_hi,group,recall`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,group,recall\n");
        for tag in [GroupTag::Protected, GroupTag::Unprotected] {
            let name = match tag {
                GroupTag::Protected => "protected",
                GroupTag::Unprotected => "unprotected",
            };
            for (r, rec) in self.groups[tag.index()].recalls.iter().enumerate() {
                let (lo, hi) = bin_bounds(r);
                out.push_str(&format!("{lo:.1},{hi:.1},{name},{}\n", rec.to_f64_lossy()));
            }
        }
        out
    }
}
