//! Pairwise log-sigmoid ranking loss with analytic gradients.
//!
//! For a batch B the loss is `-mean_{(x, y+, y-) in B} log sigmoid(d)` with
//! `d = score(x, y+) - score(x, y-)`. Per record the derivative with respect
//! to `d` is `sigmoid(d) - 1`, so the flat-parameter gradient is the mean of
//! `(sigmoid(d) - 1) * (d score+/d theta - d score-/d theta)`.

use crate::error::{Error, Result};
use crate::reward::data::PreferenceRecord;
use crate::reward::net::RewardNet;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + exp(x))`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Score difference `score(y+) - score(y-)` for one record.
pub fn score_difference(net: &RewardNet, record: &PreferenceRecord) -> Result<f64> {
    let plus = net.score(record.component, &record.context, &record.y_plus)?;
    let minus = net.score(record.component, &record.context, &record.y_minus)?;
    Ok(plus - minus)
}

/// Mean `-log sigmoid(d)` over the batch. Always positive; equals `ln 2` when
/// every score difference is zero.
pub fn ranking_loss(net: &RewardNet, batch: &[PreferenceRecord]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::validation("ranking loss needs a non-empty batch"));
    }
    let mut total = 0.0;
    for r in batch {
        let d = score_difference(net, r)?;
        total += softplus(-d);
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::numeric("ranking loss is non-finite"));
    }
    Ok(loss)
}

/// Analytic gradient of `ranking_loss` with respect to the flat parameter
/// vector. Records are accumulated in batch order for deterministic sums.
pub fn ranking_loss_grad(net: &RewardNet, batch: &[PreferenceRecord]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::validation("ranking loss needs a non-empty batch"));
    }
    let mut grad = vec![0.0; net.param_count()];
    let scale = 1.0 / batch.len() as f64;
    for r in batch {
        let (s_plus, cache_plus) = net.score_cached(r.component, &r.context, &r.y_plus)?;
        let (s_minus, cache_minus) = net.score_cached(r.component, &r.context, &r.y_minus)?;
        let coef = scale * (sigmoid(s_plus - s_minus) - 1.0);
        net.accumulate_score_grad(r.component, &cache_plus, coef, &mut grad);
        net.accumulate_score_grad(r.component, &cache_minus, -coef, &mut grad);
    }
    Ok(grad)
}

/// Fraction of pairs where the preferred output scores strictly higher; exact
/// score ties count one half.
pub fn pairwise_accuracy(net: &RewardNet, pairs: &[PreferenceRecord]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::validation("pairwise accuracy needs pairs"));
    }
    let mut hits = 0.0;
    for r in pairs {
        let d = score_difference(net, r)?;
        if d > 0.0 {
            hits += 1.0;
        } else if d == 0.0 {
            hits += 0.5;
        }
    }
    Ok(hits / pairs.len() as f64)
}
