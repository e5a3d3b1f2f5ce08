//! Functional generation of self-financing strategies and the exact
//! decomposition of their relative wealth.
//!
//! Day steps come in two kinds. A *within-epoch* step `(d-1, d]` carries
//! ordinary price motion: the excess-growth term accrues
//! `log(1 - d_B(mu_d, mu_{d-1}) / G(mu_d))` for the multiplicative strategy
//! and `-d_B` itself for the additive one. A *jump* step ends on a reset
//! day: capitalizations are frozen over the step, the strategy's absolute
//! wealth is carried across unchanged, and the correction terms accrue
//! instead: `c_tm` picks up `log sigma` and `c_g` picks up the jump of
//! `-log G`, which cancels the jump of the `log_g` term exactly.
//!
//! Every decomposition here is backed by [`share_oracle`], a brute-force
//! bookkeeper that holds target weights at the previous day's prices, marks
//! to market daily and carries wealth across dimension changes.

use crate::generate::{Family, GeneratorError};
use crate::market::{Epoch, MarketPath};
use crate::series::{AdditiveSeries, Baseline, DecompositionSeries};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("family {0} is rank-only and cannot be used by the unranked engine")]
    RankOnlyFamily(String),
    #[error("generating function is not positive on day {day}: G = {value}")]
    NonPositiveG { day: usize, value: f64 },
    #[error("strategy wealth would not stay positive on day {day}")]
    WealthNotPositive { day: usize },
    #[error("total loss on day {day}: delisting wiped out the strategy")]
    TotalLoss { day: usize },
    #[error("weights for day {day} invalid: {reason}")]
    BadWeights { day: usize, reason: String },
    #[error("family {family} cannot trade the top-{m} open market: {reason}")]
    NotOpenMarketAdmissible {
        family: String,
        m: usize,
        reason: String,
    },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
}

/// Day-by-day record of a share-level strategy run. `shares[d]` holds the
/// position carried over the step `(d-1, d]`; `shares[0]` is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub abs_wealth: Vec<f64>,
    pub rel_wealth: Vec<f64>,
    pub shares: Vec<Vec<f64>>,
}

impl OracleRun {
    pub fn len(&self) -> usize {
        self.rel_wealth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rel_wealth.is_empty()
    }
}

fn positive_value(fam: &Family, x: &[f64], day: usize) -> Result<f64, EngineError> {
    let g = fam.value(x)?;
    if !(g > 0.0) || !g.is_finite() {
        return Err(EngineError::NonPositiveG { day, value: g });
    }
    Ok(g)
}

/// Exact decomposition of the multiplicatively generated strategy's log
/// relative wealth into `log_g + eg + c_tm + c_g + dlret`.
pub fn multiplicative_decomposition(
    path: &MarketPath,
    fam: &Family,
    dlret_on: bool,
) -> Result<DecompositionSeries, EngineError> {
    multiplicative_decomposition_by_epoch(path, |_| fam.clone(), dlret_on)
}

/// Like [`multiplicative_decomposition`], with a different family allowed
/// on every epoch. The family chosen for an epoch governs from that
/// epoch's reset day on; across a reset, `c_g` compares the outgoing
/// epoch's family at the pre-jump weights with the incoming one at the
/// reset-day weights, so the jump-cancellation identity still holds.
pub fn multiplicative_decomposition_by_epoch<F>(
    path: &MarketPath,
    families: F,
    dlret_on: bool,
) -> Result<DecompositionSeries, EngineError>
where
    F: Fn(&Epoch) -> Family,
{
    let fams: Vec<Family> = path.epochs().iter().map(families).collect();
    for fam in &fams {
        if fam.flags().rank_only {
            return Err(EngineError::RankOnlyFamily(fam.spec()));
        }
    }
    let t = path.num_days();
    let mut out = DecompositionSeries::with_capacity(t, Baseline::TotalMarket);

    let w0 = path.weights_at(0);
    let g0 = positive_value(&fams[0], &w0, 0)?;
    let ln_g0 = g0.ln();
    out.push(0, 0.0, 0.0, 0.0, 0.0, 0.0);

    let mut eg = 0.0;
    let mut c_tm = 0.0;
    let mut c_g = 0.0;
    let mut dlret = 0.0;
    let mut grad_prev = fams[0].gradient(&w0)?;
    let mut w_prev = w0;
    let mut g_prev = g0;
    let mut next_reset = 1usize;

    for day in 1..t {
        let fam = &fams[path.epoch_of(day)];
        let w = path.weights_at(day);
        let g = positive_value(fam, &w, day)?;
        if path.is_reset_day(day) {
            c_tm += path.sigma(next_reset).value().ln();
            next_reset += 1;
            c_g += g_prev.ln() - g.ln();
            if dlret_on {
                let fam_prev = &fams[path.epoch_of(day - 1)];
                dlret += dlret_increment(path, fam_prev, day)?;
            }
        } else {
            let mut inner = 0.0;
            for i in 0..w.len() {
                inner += grad_prev[i] * (w[i] - w_prev[i]);
            }
            let d_b = g - g_prev - inner;
            let ratio = 1.0 - d_b / g;
            if !(ratio > 0.0) {
                return Err(EngineError::WealthNotPositive { day });
            }
            eg += ratio.ln();
        }
        out.push(day, g.ln() - ln_g0, eg, c_tm, c_g, dlret);
        grad_prev = fam.gradient(&w)?;
        w_prev = w;
        g_prev = g;
    }
    Ok(out)
}

/// Sum of `log(1 + pi_i * DLRET_i)` over the stocks delisting on `day`,
/// with the strategy's weight `pi` taken from the previous day's market
/// weights. Missing delisting returns count as zero.
fn dlret_increment(path: &MarketPath, fam: &Family, day: usize) -> Result<f64, EngineError> {
    let mut sum = 0.0;
    let mut weights: Option<Vec<f64>> = None;
    for del in path.delistings_on(day) {
        let r = del.dlret.unwrap_or(0.0);
        if r == 0.0 {
            continue;
        }
        if weights.is_none() {
            weights = Some(portfolio_weights(path, fam, day)?);
        }
        let pi_i = weights.as_ref().expect("just filled")[del.index];
        let factor = 1.0 + pi_i * r;
        if !(factor > 0.0) {
            return Err(EngineError::TotalLoss { day });
        }
        sum += factor.ln();
    }
    Ok(sum)
}

/// Portfolio weights held by the multiplicative strategy over the step
/// `(day-1, day]`, computed from the previous day's market weights:
/// `pi_i = mu_i (d_i G + G - sum_j mu_j d_j G) / G`. For balanced families
/// this reduces to `mu_i d_i G / sum_j mu_j d_j G`.
pub fn portfolio_weights(
    path: &MarketPath,
    fam: &Family,
    day: usize,
) -> Result<Vec<f64>, EngineError> {
    if fam.flags().rank_only {
        return Err(EngineError::RankOnlyFamily(fam.spec()));
    }
    assert!(day >= 1 && day < path.num_days(), "day {day} out of range");
    let w = path.weights_at(day - 1);
    let g = positive_value(fam, &w, day - 1)?;
    let grad = fam.gradient(&w)?;
    let s: f64 = w.iter().zip(&grad).map(|(wi, gi)| wi * gi).sum();
    if fam.flags().balanced {
        // s equals G here, so the general formula collapses.
        Ok(w.iter().zip(&grad).map(|(wi, gi)| wi * gi / s).collect())
    } else {
        Ok(w.iter()
            .zip(&grad)
            .map(|(wi, gi)| wi * (gi + g - s) / g)
            .collect())
    }
}

/// Share-level bookkeeping for an arbitrary strategy. `weights(day, rel)`
/// must return the target weights (dimension of day `day-1`) to hold over
/// the step `(day-1, day]`, given the relative wealth entering the step.
///
/// Within an epoch the position is marked to market at the new day's
/// prices. On a reset day capitalizations are frozen over the step:
/// absolute wealth is carried across unchanged, except that with `dlret_on`
/// each delisted position is credited `(1 + DLRET)` times its last value.
pub fn share_oracle<F>(
    path: &MarketPath,
    mut weights: F,
    dlret_on: bool,
) -> Result<OracleRun, EngineError>
where
    F: FnMut(usize, f64) -> Result<Vec<f64>, EngineError>,
{
    let t = path.num_days();
    let mut abs_wealth = Vec::with_capacity(t);
    let mut rel_wealth = Vec::with_capacity(t);
    let mut shares: Vec<Vec<f64>> = Vec::with_capacity(t);
    abs_wealth.push(path.total_cap(0));
    rel_wealth.push(1.0);
    shares.push(Vec::new());

    for day in 1..t {
        let caps_prev = path.caps(day - 1);
        let w = weights(day, rel_wealth[day - 1])?;
        if w.len() != caps_prev.len() {
            return Err(EngineError::BadWeights {
                day,
                reason: format!("dimension {} != {}", w.len(), caps_prev.len()),
            });
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            return Err(EngineError::BadWeights {
                day,
                reason: format!("weights sum to {sum}"),
            });
        }
        let wealth = abs_wealth[day - 1];
        let pos: Vec<f64> = w
            .iter()
            .zip(caps_prev)
            .map(|(wi, c)| wi * wealth / c)
            .collect();
        let new_wealth = if path.is_reset_day(day) {
            let mut carried = wealth;
            if dlret_on {
                for del in path.delistings_on(day) {
                    if let Some(r) = del.dlret {
                        carried += pos[del.index] * caps_prev[del.index] * r;
                    }
                }
            }
            carried
        } else {
            pos.iter().zip(path.caps(day)).map(|(s, c)| s * c).sum()
        };
        if !(new_wealth > 0.0) {
            return Err(EngineError::TotalLoss { day });
        }
        abs_wealth.push(new_wealth);
        rel_wealth.push(new_wealth / path.total_cap(day));
        shares.push(pos);
    }
    Ok(OracleRun {
        abs_wealth,
        rel_wealth,
        shares,
    })
}

/// Oracle run of the multiplicatively generated strategy.
pub fn multiplicative_oracle(
    path: &MarketPath,
    fam: &Family,
    dlret_on: bool,
) -> Result<OracleRun, EngineError> {
    share_oracle(path, |day, _| portfolio_weights(path, fam, day), dlret_on)
}

/// Oracle run with a per-epoch family map; the weights over a step use the
/// family of the epoch the step starts in.
pub fn multiplicative_oracle_by_epoch<F>(
    path: &MarketPath,
    families: F,
    dlret_on: bool,
) -> Result<OracleRun, EngineError>
where
    F: Fn(&Epoch) -> Family,
{
    let fams: Vec<Family> = path.epochs().iter().map(families).collect();
    share_oracle(
        path,
        |day, _| portfolio_weights(path, &fams[path.epoch_of(day - 1)], day),
        dlret_on,
    )
}

/// Decomposition of the additively generated strategy's relative wealth
/// into `v = g + eg_add + c_add`, normalized so that `v(0) = g(0) = 1`.
///
/// Past Gamma accruals and past correction summands are rescaled by the
/// sigma ratio at every later reset, which is what makes `eg_add` only
/// piecewise nondecreasing: a reset with `sigma < 1` shrinks everything
/// accumulated so far.
pub fn additive_decomposition(
    path: &MarketPath,
    fam: &Family,
) -> Result<AdditiveSeries, EngineError> {
    if fam.flags().rank_only {
        return Err(EngineError::RankOnlyFamily(fam.spec()));
    }
    let t = path.num_days();
    let mut out = AdditiveSeries::with_capacity(t);
    let w0 = path.weights_at(0);
    let g0 = positive_value(fam, &w0, 0)?;
    out.push(0, 1.0, 0.0, 0.0);

    let mut eg = 0.0;
    let mut c = 0.0;
    let mut grad_prev = fam.gradient(&w0)?;
    let mut w_prev = w0;
    let mut g_prev = 1.0;
    let mut next_reset = 1usize;

    for day in 1..t {
        let w = path.weights_at(day);
        let g = positive_value(fam, &w, day)? / g0;
        if path.is_reset_day(day) {
            let sigma = path.sigma(next_reset).value();
            next_reset += 1;
            eg *= sigma;
            c = sigma * c + (sigma * g_prev - g);
        } else {
            let mut inner = 0.0;
            for i in 0..w.len() {
                inner += grad_prev[i] * (w[i] - w_prev[i]);
            }
            // -d_B(w, w_prev) / g0 with everything already normalized.
            eg += (inner / g0) - (g - g_prev);
        }
        out.push(day, g, eg, c);
        grad_prev = fam.gradient(&w)?;
        w_prev = w;
        g_prev = g;
    }
    Ok(out)
}

/// Portfolio weights of the additively generated strategy over the step
/// `(day-1, day]`. Unlike the multiplicative case these depend on the
/// strategy's running relative wealth, and they may be negative.
pub fn additive_portfolio_weights(
    path: &MarketPath,
    fam: &Family,
    day: usize,
    rel_wealth: f64,
) -> Result<Vec<f64>, EngineError> {
    if fam.flags().rank_only {
        return Err(EngineError::RankOnlyFamily(fam.spec()));
    }
    assert!(day >= 1 && day < path.num_days(), "day {day} out of range");
    if !(rel_wealth > 0.0) {
        return Err(EngineError::WealthNotPositive { day });
    }
    let g0 = positive_value(fam, &path.weights_at(0), 0)?;
    let w = path.weights_at(day - 1);
    let grad = fam.gradient(&w)?;
    let s: f64 = w.iter().zip(&grad).map(|(wi, gi)| wi * gi).sum();
    // Share holdings in market-weight units: (grad_i - s)/g0 + V; weights
    // are holdings times weight over wealth.
    Ok(w.iter()
        .zip(&grad)
        .map(|(wi, gi)| ((gi - s) / g0 + rel_wealth) * wi / rel_wealth)
        .collect())
}

/// Oracle run of the additively generated strategy.
pub fn additive_oracle(path: &MarketPath, fam: &Family) -> Result<OracleRun, EngineError> {
    share_oracle(
        path,
        |day, rel| additive_portfolio_weights(path, fam, day, rel),
        false,
    )
}

/// Relative wealth of the additively generated strategy measured against
/// the self-financing market portfolio, `v / sigma_product`. Reported as a
/// plain series; unlike the multiplicative case it admits no decomposition
/// free of the sigma ratios.
pub fn additive_u(path: &MarketPath, series: &AdditiveSeries) -> Vec<f64> {
    let mut sigma_prod = 1.0;
    let mut next_reset = 1usize;
    (0..series.len())
        .map(|day| {
            if path.is_reset_day(day) {
                sigma_prod *= path.sigma(next_reset).value();
                next_reset += 1;
            }
            series.v[day] / sigma_prod
        })
        .collect()
}

/// Series of the self-financing market portfolio: `log_v = c_tm` is the
/// accumulated log sigma ratios and every other term vanishes.
pub fn self_financing_market(path: &MarketPath) -> DecompositionSeries {
    let t = path.num_days();
    let mut out = DecompositionSeries::with_capacity(t, Baseline::TotalMarket);
    let mut c_tm = 0.0;
    let mut next_reset = 1usize;
    out.push(0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for day in 1..t {
        if path.is_reset_day(day) {
            c_tm += path.sigma(next_reset).value().ln();
            next_reset += 1;
        }
        out.push(day, 0.0, 0.0, c_tm, 0.0, 0.0);
    }
    out
}
