use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

/// Probabilities are floored here before taking the log in cross-entropy.
pub const CCE_FLOOR: f64 = 1e-12;

/// Per-sample loss on softmax probabilities `p` against one-hot `e_y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `-ln max(p_y, CCE_FLOOR)`
    Cce,
    /// `sum_k |p_k - e_yk|`
    Mae,
    /// `sum_k (p_k - e_yk)^2`
    Mse,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Cce, LossKind::Mae, LossKind::Mse];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Cce => "cce",
            LossKind::Mae => "mae",
            LossKind::Mse => "mse",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cce" => Ok(LossKind::Cce),
            "mae" => Ok(LossKind::Mae),
            "mse" => Ok(LossKind::Mse),
            other => Err(Error::invalid(format!("unknown loss '{other}'"))),
        }
    }
}

pub(crate) fn check_labels(labels: &[usize], num_classes: usize) -> Result<()> {
    if let Some(i) = labels.iter().position(|&y| y >= num_classes) {
        return Err(Error::invalid(format!(
            "label {} at row {i} is out of range for {num_classes} classes",
            labels[i]
        )));
    }
    Ok(())
}

pub fn loss_per_sample<S: Scalar>(
    probs: ArrayView2<'_, S>,
    labels: &[usize],
    kind: LossKind,
) -> Result<Vec<S>> {
    if probs.nrows() != labels.len() {
        return Err(Error::invalid(format!(
            "{} probability rows but {} labels",
            probs.nrows(),
            labels.len()
        )));
    }
    check_labels(labels, probs.ncols())?;
    Ok(probs
        .outer_iter()
        .zip(labels)
        .map(|(p, &y)| sample_loss(p, y, kind))
        .collect())
}

pub(crate) fn sample_loss<S: Scalar>(p: ArrayView1<'_, S>, y: usize, kind: LossKind) -> S {
    match kind {
        LossKind::Cce => -p[y].max(S::lit(CCE_FLOOR)).ln(),
        LossKind::Mae => p
            .iter()
            .enumerate()
            .fold(S::zero(), |acc, (k, &pk)| acc + (pk - onehot(k, y)).abs()),
        LossKind::Mse => p.iter().enumerate().fold(S::zero(), |acc, (k, &pk)| {
            let d = pk - onehot(k, y);
            acc + d * d
        }),
    }
}

fn onehot<S: Scalar>(k: usize, y: usize) -> S {
    if k == y {
        S::one()
    } else {
        S::zero()
    }
}

/// Writes `scale * dL/dz` for logits `z` with `p = softmax(z)` into `out`.
pub(crate) fn loss_grad_logits<S: Scalar>(
    p: ArrayView1<'_, S>,
    y: usize,
    kind: LossKind,
    scale: S,
    mut out: ArrayViewMut1<'_, S>,
) {
    if kind == LossKind::Cce {
        // flat below the clamp
        if p[y] <= S::lit(CCE_FLOOR) {
            out.fill(S::zero());
            return;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o = scale * (p[k] - onehot(k, y));
        }
        return;
    }
    // dL/dp, then through the softmax Jacobian: dz_k = p_k (g_k - <p, g>)
    let g = |k: usize| -> S {
        match kind {
            LossKind::Mae => {
                if k == y {
                    -S::one()
                } else {
                    S::one()
                }
            }
            _ => S::lit(2.0) * (p[k] - onehot(k, y)),
        }
    };
    let dot = (0..p.len()).fold(S::zero(), |acc, k| acc + p[k] * g(k));
    for (k, o) in out.iter_mut().enumerate() {
        *o = scale * p[k] * (g(k) - dot);
    }
}
