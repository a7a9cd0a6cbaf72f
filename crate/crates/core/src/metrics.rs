//! Performance and fairness metrics.
//!
//! Performance error is the misprediction fraction (invalid output counts
//! as wrong). Fairness error is the demographic-parity gap
//! `|P(y_hat=1 | z=0) - P(y_hat=1 | z=1)|` with invalid output counted as a
//! negative prediction. The combined error blends the two:
//! `e = alpha * pi + (1 - alpha) * psi`. Disparate impact is the group
//! rate ratio, and kappa its `|1 - rate0 / (rate1 + rho)|` form with a
//! small `rho` guarding the zero denominator.

use serde::{Deserialize, Serialize};

use crate::dataset::{to_text, Dataset, RecordId};
use crate::error::{Error, Result};
use crate::predictor::{predict_positional, Engine, PredictedLabel, Purpose};

pub const DEFAULT_RHO: f64 = 1e-5;

/// Aligned true labels, predictions, and sensitive attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledOutcomes {
    y: Vec<u8>,
    y_hat: Vec<PredictedLabel>,
    z: Vec<u8>,
}

impl LabeledOutcomes {
    pub fn new(y: Vec<u8>, y_hat: Vec<PredictedLabel>, z: Vec<u8>) -> Result<LabeledOutcomes> {
        if y.is_empty() || y.len() != y_hat.len() || y.len() != z.len() {
            return Err(Error::Argument(format!(
                "outcome vectors must be non-empty and equal length (got {}, {}, {})",
                y.len(),
                y_hat.len(),
                z.len()
            )));
        }
        if y.iter().chain(z.iter()).any(|v| *v > 1) {
            return Err(Error::Argument("y and z must be binary".into()));
        }
        Ok(LabeledOutcomes { y, y_hat, z })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn y_hat(&self) -> &[PredictedLabel] {
        &self.y_hat
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }
}

/// Positive-prediction counts per sensitive group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupRates {
    pub n: [usize; 2],
    pub positives: [usize; 2],
}

impl GroupRates {
    pub fn from_outcomes(o: &LabeledOutcomes) -> GroupRates {
        let mut rates = GroupRates {
            n: [0, 0],
            positives: [0, 0],
        };
        for ((&z, &_y), &y_hat) in o.z.iter().zip(o.y.iter()).zip(o.y_hat.iter()) {
            let g = z as usize;
            rates.n[g] += 1;
            if y_hat.as_positive() {
                rates.positives[g] += 1;
            }
        }
        rates
    }

    /// Positive rate of group `g`; an empty group rates 0.
    pub fn rate(&self, g: usize) -> f64 {
        if self.n[g] == 0 {
            0.0
        } else {
            self.positives[g] as f64 / self.n[g] as f64
        }
    }

    /// True when either group has no members.
    pub fn degenerate(&self) -> bool {
        self.n[0] == 0 || self.n[1] == 0
    }
}

/// Misprediction fraction; invalid predictions always count as wrong.
pub fn performance_error(o: &LabeledOutcomes) -> f64 {
    let wrong = o
        .y
        .iter()
        .zip(o.y_hat.iter())
        .filter(|(&y, &y_hat)| !y_hat.matches(y))
        .count();
    wrong as f64 / o.len() as f64
}

/// Demographic-parity gap. An empty group yields 0 (callers can detect the
/// degenerate case through [`GroupRates::degenerate`]).
pub fn fairness_error(o: &LabeledOutcomes) -> f64 {
    let rates = GroupRates::from_outcomes(o);
    if rates.degenerate() {
        0.0
    } else {
        (rates.rate(0) - rates.rate(1)).abs()
    }
}

/// Linear blend of performance and fairness error.
pub fn combined_error(pi: f64, psi: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
        return Err(Error::Argument(format!("alpha must lie in [0,1], got {alpha}")));
    }
    Ok(alpha * pi + (1.0 - alpha) * psi)
}

/// Group positive-rate ratio `rate0 / rate1`; the zero-denominator case is
/// reported as the infinity sentinel.
pub fn disparate_impact(o: &LabeledOutcomes) -> f64 {
    let rates = GroupRates::from_outcomes(o);
    let r1 = rates.rate(1);
    if r1 == 0.0 {
        f64::INFINITY
    } else {
        rates.rate(0) / r1
    }
}

/// `|1 - rate0 / (rate1 + rho)|`, finite for any `rho > 0`.
pub fn kappa(o: &LabeledOutcomes, rho: f64) -> Result<f64> {
    if rho.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Argument(format!("rho must be positive, got {rho}")));
    }
    let rates = GroupRates::from_outcomes(o);
    Ok((1.0 - rates.rate(0) / (rates.rate(1) + rho)).abs())
}

/// Per-group confusion counts for the positive class. Invalid predictions
/// are bucketed as negative predictions here, matching the fairness-rate
/// convention (so `tp + fp` over `n` recovers the group positive rate).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub n: [usize; 2],
    pub tp: [usize; 2],
    pub fp: [usize; 2],
    pub tn: [usize; 2],
    #[serde(rename = "fn")]
    pub fn_: [usize; 2],
}

/// Every metric for one prediction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub pi: f64,
    pub psi: f64,
    #[serde(with = "float_or_inf")]
    pub di: f64,
    pub kappa: f64,
    pub e: f64,
    pub alpha: f64,
    pub rho: f64,
    pub group: GroupConfusion,
    pub invalid_predictions: usize,
    pub degenerate_group: bool,
}

/// Computes the full [`MetricsBundle`]. Precision, recall, and F1 are
/// per-class values averaged with class-support weights; invalid
/// predictions count as predictions of neither class there.
pub fn classification_report(o: &LabeledOutcomes, alpha: f64, rho: f64) -> Result<MetricsBundle> {
    let pi = performance_error(o);
    let accuracy = 1.0 - pi;
    let psi = fairness_error(o);
    let e = combined_error(pi, psi, alpha)?;
    let kappa_value = kappa(o, rho)?;
    let rates = GroupRates::from_outcomes(o);

    let n = o.len() as f64;
    let mut precision = 0.0;
    let mut recall = 0.0;
    let mut f1 = 0.0;
    for class in [0u8, 1u8] {
        let actual = o.y.iter().filter(|&&y| y == class).count();
        if actual == 0 {
            continue;
        }
        let predicted = o
            .y_hat
            .iter()
            .filter(|&&p| p == PredictedLabel::from_binary(class))
            .count();
        let tp = o
            .y
            .iter()
            .zip(o.y_hat.iter())
            .filter(|(&y, &p)| y == class && p == PredictedLabel::from_binary(class))
            .count();
        let class_precision = if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        let class_recall = tp as f64 / actual as f64;
        let class_f1 = if class_precision + class_recall == 0.0 {
            0.0
        } else {
            2.0 * class_precision * class_recall / (class_precision + class_recall)
        };
        let weight = actual as f64 / n;
        precision += weight * class_precision;
        recall += weight * class_recall;
        f1 += weight * class_f1;
    }

    let mut group = GroupConfusion::default();
    for ((&y, &y_hat), &z) in o.y.iter().zip(o.y_hat.iter()).zip(o.z.iter()) {
        let g = z as usize;
        group.n[g] += 1;
        match (y, y_hat.as_positive()) {
            (1, true) => group.tp[g] += 1,
            (0, true) => group.fp[g] += 1,
            (0, false) => group.tn[g] += 1,
            (_, false) => group.fn_[g] += 1,
            _ => unreachable!("y validated binary"),
        }
    }

    Ok(MetricsBundle {
        accuracy,
        precision,
        recall,
        f1,
        pi,
        psi,
        di: disparate_impact(o),
        kappa: kappa_value,
        e,
        alpha,
        rho,
        group,
        invalid_predictions: o
            .y_hat
            .iter()
            .filter(|&&p| p == PredictedLabel::Invalid)
            .count(),
        degenerate_group: rates.degenerate(),
    })
}

/// One proxy-set evaluation of a candidate in-context example set.
#[derive(Debug, Clone)]
pub struct ErrorEval {
    pub e: f64,
    pub bundle: MetricsBundle,
    pub cache_hit: bool,
}

/// Scores an in-context example set against the proxy positions: predicts
/// the proxies' labels with `ices` in the prompt, then blends performance
/// and fairness error. Proxy ids must resolve in `train` (their gold
/// labels are known there); `ices` keeps the caller's prompt order.
pub fn error(
    train: &Dataset,
    proxy: &[RecordId],
    ices: &[RecordId],
    alpha: f64,
    rho: f64,
    engine: &Engine,
) -> Result<ErrorEval> {
    if proxy.is_empty() {
        return Err(Error::Argument("proxy set must not be empty".into()));
    }
    let schema = &train.schema;
    let ice_texts: Vec<String> = ices
        .iter()
        .map(|&id| Ok(to_text(train.record(id)?, schema, true)))
        .collect::<Result<_>>()?;
    let query_texts: Vec<String> = proxy
        .iter()
        .map(|&id| Ok(to_text(train.record(id)?, schema, false)))
        .collect::<Result<_>>()?;

    let (labels, cache_hit) = predict_positional(
        engine,
        &schema.task_instruction,
        ice_texts,
        &query_texts,
        schema,
        Purpose::Selection,
    )?;

    let y = proxy
        .iter()
        .map(|&id| Ok(train.record(id)?.y))
        .collect::<Result<_>>()?;
    let z = proxy
        .iter()
        .map(|&id| Ok(train.record(id)?.z))
        .collect::<Result<_>>()?;
    let outcomes = LabeledOutcomes::new(y, labels, z)?;
    let bundle = classification_report(&outcomes, alpha, rho)?;
    Ok(ErrorEval {
        e: bundle.e,
        bundle,
        cache_hit,
    })
}

mod float_or_inf {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Text(s) => Err(D::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}
