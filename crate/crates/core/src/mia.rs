//! Membership inference against a decision tree, with the target model
//! itself standing in as the shadow model.
//!
//! Attack examples are the target's probability vectors for known members
//! (drawn from its training split) and known non-members (from its testing
//! split), bucketed by class label. One binary network is trained per
//! bucket. The label is the record's own class by default; bucketing by the
//! target's predicted class is available for attackers that only see
//! model outputs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Record};
use crate::id3::DecisionTree;
use crate::mlp::{Mlp, MlpHyper};
use crate::scalar::{argmax, Real};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MiaError {
    #[error("no member records to build the attack training set from")]
    NoMembers,
    #[error("no non-member records to build the attack training set from")]
    NoNonMembers,
}

/// Minimum examples of each membership bit for a bucket to get a network.
pub const MIN_PER_BIT: usize = 2;

/// Member-probability threshold; ties go to "member".
pub const MEMBER_THRESHOLD: f64 = 0.5;

/// Which class label selects the attack network for a record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketBy {
    /// The record's own label.
    #[default]
    TrueClass,
    /// The target's argmax class.
    PredictedClass,
}

impl BucketBy {
    fn bucket<T: Real>(self, probs: &[T], label: usize) -> usize {
        match self {
            BucketBy::TrueClass => label,
            BucketBy::PredictedClass => argmax(probs),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackTrainingSet<T> {
    /// Indexed by bucket label: `(probability vector, is_member)`.
    pub buckets: Vec<Vec<(Vec<T>, bool)>>,
    pub bucket_by: BucketBy,
    /// Column holding the class label in the records.
    pub class_column: usize,
}

pub fn build_attack_training_set<T: Real>(
    target: &DecisionTree<T>,
    attack_members: &Dataset,
    attack_nonmembers: &Dataset,
    bucket_by: BucketBy,
) -> Result<AttackTrainingSet<T>, MiaError> {
    if attack_members.is_empty() {
        return Err(MiaError::NoMembers);
    }
    if attack_nonmembers.is_empty() {
        return Err(MiaError::NoNonMembers);
    }
    let mut buckets = vec![Vec::new(); target.class_count];
    for (ds, member) in [(attack_members, true), (attack_nonmembers, false)] {
        for (i, r) in ds.records().iter().enumerate() {
            let v = target.predict_proba(r).to_vec();
            buckets[bucket_by.bucket(&v, ds.class_of(i))].push((v, member));
        }
    }
    Ok(AttackTrainingSet { buckets, bucket_by, class_column: attack_members.class_index() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClassAttack<T> {
    /// Inputs are standardized with `mean` and `scale` before the network;
    /// output index 1 is "member".
    Network { mlp: Mlp<T>, mean: Vec<T>, scale: Vec<T> },
    Constant { member: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackModel<T> {
    pub per_class: Vec<ClassAttack<T>>,
    pub hyper: MlpHyper,
    pub bucket_by: BucketBy,
    pub class_column: usize,
}

fn bucket_seed(seed: u64, class: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(class as u64 + 1)
}

fn train_bucket<T: Real>(bucket: &[(Vec<T>, bool)], width: usize, hyper: &MlpHyper, seed: u64) -> ClassAttack<T> {
    let members: Vec<&Vec<T>> = bucket.iter().filter(|(_, m)| *m).map(|(v, _)| v).collect();
    let nonmembers: Vec<&Vec<T>> = bucket.iter().filter(|(_, m)| !*m).map(|(v, _)| v).collect();
    if members.len() < MIN_PER_BIT || nonmembers.len() < MIN_PER_BIT {
        return ClassAttack::Constant { member: members.len() >= nonmembers.len() };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = members.len().min(nonmembers.len());
    let mut pick = |pool: Vec<&Vec<T>>| -> Vec<Vec<T>> {
        if pool.len() == keep {
            return pool.into_iter().cloned().collect();
        }
        rand::seq::index::sample(&mut rng, pool.len(), keep)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect()
    };
    let mut data: Vec<(Vec<T>, usize)> = pick(members).into_iter().map(|v| (v, 1)).collect();
    data.extend(pick(nonmembers).into_iter().map(|v| (v, 0)));
    data.shuffle(&mut rng);
    let n = T::from_count(data.len());
    let mean: Vec<T> = (0..width).map(|f| data.iter().map(|(v, _)| v[f]).sum::<T>() / n).collect();
    let scale: Vec<T> = (0..width)
        .map(|f| {
            let var = data.iter().map(|(v, _)| (v[f] - mean[f]).powi(2)).sum::<T>() / n;
            if var > T::zero() { T::one() / var.sqrt() } else { T::one() }
        })
        .collect();
    for (v, _) in data.iter_mut() {
        for f in 0..width {
            v[f] = (v[f] - mean[f]) * scale[f];
        }
    }
    let mut mlp = Mlp::new(width, hyper.hidden, 2, &mut rng);
    mlp.fit(&data, hyper, &mut rng);
    ClassAttack::Network { mlp, mean, scale }
}

/// Trains one network per class bucket; buckets with fewer than
/// [`MIN_PER_BIT`] examples of either bit become constant predictors. The
/// majority bit is undersampled to balance each bucket, and inputs are
/// standardized per bucket: raw probability vectors pile up near the
/// corners of the simplex, where an unscaled network with the default
/// schedule often fails to separate them.
pub fn train_attack_model<T: Real>(ats: &AttackTrainingSet<T>, hyper: &MlpHyper, seed: u64) -> AttackModel<T> {
    let width = ats.buckets.len();
    let per_class = ats
        .buckets
        .par_iter()
        .enumerate()
        .map(|(c, bucket)| train_bucket(bucket, width, hyper, bucket_seed(seed, c)))
        .collect();
    AttackModel { per_class, hyper: *hyper, bucket_by: ats.bucket_by, class_column: ats.class_column }
}

impl<T: Real> AttackModel<T> {
    /// Membership bit for a target probability vector of a record with
    /// class `label`.
    pub fn infer_from_probs(&self, probs: &[T], label: usize) -> bool {
        match &self.per_class[self.bucket_by.bucket(probs, label)] {
            ClassAttack::Constant { member } => *member,
            ClassAttack::Network { mlp, mean, scale } => {
                let x: Vec<T> = probs.iter().zip(mean).zip(scale).map(|((&p, &m), &s)| (p - m) * s).collect();
                mlp.forward(&x)[1] >= T::lit(MEMBER_THRESHOLD)
            }
        }
    }
}

pub fn infer_membership<T: Real>(am: &AttackModel<T>, target: &DecisionTree<T>, record: &Record) -> bool {
    am.infer_from_probs(target.predict_proba(record), record.code(am.class_column) as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inference<T> {
    pub predicted_member: bool,
    pub probs: Vec<T>,
    pub true_class: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiaResult<T> {
    /// `None` when nothing was predicted to be a member.
    pub precision: Option<f64>,
    pub recall: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub members: Vec<Inference<T>>,
    pub nonmembers: Vec<Inference<T>>,
}

impl<T> MiaResult<T> {
    pub fn false_positive_rate(&self) -> f64 {
        if self.nonmembers.is_empty() {
            0.0
        } else {
            self.false_positives as f64 / self.nonmembers.len() as f64
        }
    }
}

fn infer_all<T: Real>(am: &AttackModel<T>, target: &DecisionTree<T>, ds: &Dataset) -> Vec<Inference<T>> {
    (0..ds.len())
        .map(|i| {
            let probs = target.predict_proba(&ds.records()[i]).to_vec();
            let true_class = ds.class_of(i);
            Inference { predicted_member: am.infer_from_probs(&probs, true_class), probs, true_class }
        })
        .collect()
}

/// Precision/recall from per-record membership predictions.
pub fn score_predictions<T>(members: Vec<Inference<T>>, nonmembers: Vec<Inference<T>>) -> MiaResult<T> {
    let tp = members.iter().filter(|i| i.predicted_member).count();
    let fp = nonmembers.iter().filter(|i| i.predicted_member).count();
    let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
    let recall = if members.is_empty() { 0.0 } else { tp as f64 / members.len() as f64 };
    MiaResult { precision, recall, true_positives: tp, false_positives: fp, members, nonmembers }
}

pub fn evaluate_mia<T: Real>(
    am: &AttackModel<T>,
    target: &DecisionTree<T>,
    eval_members: &Dataset,
    eval_nonmembers: &Dataset,
) -> MiaResult<T> {
    score_predictions(infer_all(am, target, eval_members), infer_all(am, target, eval_nonmembers))
}
