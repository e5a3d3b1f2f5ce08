//! Rank-based functional generation and top-`m` open-market portfolios.
//!
//! Generating functions here take the weight vector sorted in descending
//! order. Ties are broken lexicographically: among equal weights, the stock
//! with the smaller index gets the better (smaller) rank, so the rank
//! permutation is always a bijection. The per-step Gamma increment is
//! computed from its defining identity,
//! `dGamma = -(G(bold_d) - G(bold_{d-1})) + sum_i theta_i dmu_i` with
//! `theta_i` the gradient component at stock `i`'s previous-day rank, which
//! is exactly computable from the discrete path.

use crate::engine::{share_oracle, EngineError, OracleRun};
use crate::generate::Family;
use crate::market::MarketPath;
use crate::series::{Baseline, DecompositionSeries};

/// Per-day correspondence between stock indices and capitalization ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankView {
    /// `perm[i]` is the 1-based rank of stock `i`.
    perm: Vec<usize>,
    /// `by_rank[l]` is the stock index holding rank `l + 1`.
    by_rank: Vec<usize>,
    /// Tie counts before tie-breaking: `tie_counts[l]` is the number of
    /// stocks whose weight equals the rank-`(l+1)` weight.
    tie_counts: Vec<usize>,
}

impl RankView {
    pub fn rank_of(&self, index: usize) -> usize {
        self.perm[index]
    }

    pub fn index_at_rank(&self, rank: usize) -> usize {
        self.by_rank[rank - 1]
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn tie_counts(&self) -> &[usize] {
        &self.tie_counts
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Applies the permutation to `x`, producing the descending vector.
    pub fn sort<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.by_rank.iter().map(|&i| x[i]).collect()
    }
}

/// Ranks a weight vector in descending order under the lexicographic
/// tie-breaking rule.
pub fn rank_view(x: &[f64]) -> RankView {
    let n = x.len();
    let mut by_rank: Vec<usize> = (0..n).collect();
    // Stable sort keeps smaller indices first among ties.
    by_rank.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).expect("weights are ordered"));
    let mut perm = vec![0usize; n];
    for (pos, &i) in by_rank.iter().enumerate() {
        perm[i] = pos + 1;
    }
    let mut tie_counts = vec![0usize; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[by_rank[end]] == x[by_rank[start]] {
            end += 1;
        }
        for slot in tie_counts.iter_mut().take(end).skip(start) {
            *slot = end - start;
        }
        start = end;
    }
    RankView {
        perm,
        by_rank,
        tie_counts,
    }
}

fn positive_value(fam: &Family, sorted: &[f64], day: usize) -> Result<f64, EngineError> {
    let g = fam.value(sorted)?;
    if !(g > 0.0) || !g.is_finite() {
        return Err(EngineError::NonPositiveG { day, value: g });
    }
    Ok(g)
}

/// Decomposition of the rank-based multiplicatively generated strategy's
/// log relative wealth. For symmetric families on paths with distinct
/// weights this coincides with [`multiplicative_decomposition`]
/// (crate::engine::multiplicative_decomposition).
pub fn ranked_multiplicative_decomposition(
    path: &MarketPath,
    fam: &Family,
    dlret_on: bool,
) -> Result<DecompositionSeries, EngineError> {
    let t = path.num_days();
    let mut out = DecompositionSeries::with_capacity(t, Baseline::TotalMarket);

    let w0 = path.weights_at(0);
    let rv0 = rank_view(&w0);
    let sorted0 = rv0.sort(&w0);
    let g0 = positive_value(fam, &sorted0, 0)?;
    let ln_g0 = g0.ln();
    out.push(0, 0.0, 0.0, 0.0, 0.0, 0.0);

    let mut eg = 0.0;
    let mut c_tm = 0.0;
    let mut c_g = 0.0;
    let mut dlret = 0.0;
    let mut next_reset = 1usize;
    let mut grad_prev = fam.gradient(&sorted0)?;
    let mut w_prev = w0;
    let mut rv_prev = rv0;
    let mut sorted_prev = sorted0;
    let mut g_prev = g0;

    for day in 1..t {
        let w = path.weights_at(day);
        let rv = rank_view(&w);
        let sorted = rv.sort(&w);
        let g = positive_value(fam, &sorted, day)?;
        if path.is_reset_day(day) {
            c_tm += path.sigma(next_reset).value().ln();
            next_reset += 1;
            c_g += g_prev.ln() - g.ln();
            if dlret_on {
                dlret += ranked_dlret_increment(path, fam, day, &w_prev, &rv_prev, &sorted_prev)?;
            }
        } else {
            let mut gain = 0.0;
            for i in 0..w.len() {
                gain += grad_prev[rv_prev.rank_of(i) - 1] * (w[i] - w_prev[i]);
            }
            let d_gamma = -(g - g_prev) + gain;
            let ratio = 1.0 + d_gamma / g;
            if !(ratio > 0.0) {
                return Err(EngineError::WealthNotPositive { day });
            }
            eg += ratio.ln();
        }
        out.push(day, g.ln() - ln_g0, eg, c_tm, c_g, dlret);
        grad_prev = fam.gradient(&sorted)?;
        w_prev = w;
        rv_prev = rv;
        sorted_prev = sorted;
        g_prev = g;
    }
    Ok(out)
}

fn ranked_dlret_increment(
    path: &MarketPath,
    fam: &Family,
    day: usize,
    w_prev: &[f64],
    rv_prev: &RankView,
    sorted_prev: &[f64],
) -> Result<f64, EngineError> {
    let mut sum = 0.0;
    let mut weights: Option<Vec<f64>> = None;
    for del in path.delistings_on(day) {
        let r = del.dlret.unwrap_or(0.0);
        if r == 0.0 {
            continue;
        }
        if weights.is_none() {
            weights = Some(weights_from_view(fam, w_prev, rv_prev, sorted_prev, day)?);
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

fn weights_from_view(
    fam: &Family,
    w: &[f64],
    rv: &RankView,
    sorted: &[f64],
    day: usize,
) -> Result<Vec<f64>, EngineError> {
    let g = positive_value(fam, sorted, day)?;
    let grad = fam.gradient(sorted)?;
    let theta: Vec<f64> = (0..w.len()).map(|i| grad[rv.rank_of(i) - 1]).collect();
    let s: f64 = w.iter().zip(&theta).map(|(wi, ti)| wi * ti).sum();
    if fam.flags().balanced {
        // s equals G, and a vanishing gradient component stays an exact
        // zero weight, which open-market strategies rely on.
        Ok(w.iter().zip(&theta).map(|(wi, ti)| wi * ti / s).collect())
    } else {
        Ok(w.iter()
            .zip(&theta)
            .map(|(wi, ti)| wi * (ti + g - s) / g)
            .collect())
    }
}

/// Portfolio weights held by the rank-based multiplicative strategy over
/// the step `(day-1, day]`, using the previous day's rank permutation.
pub fn ranked_portfolio_weights(
    path: &MarketPath,
    fam: &Family,
    day: usize,
) -> Result<Vec<f64>, EngineError> {
    assert!(day >= 1 && day < path.num_days(), "day {day} out of range");
    let w = path.weights_at(day - 1);
    let rv = rank_view(&w);
    let sorted = rv.sort(&w);
    weights_from_view(fam, &w, &rv, &sorted, day - 1)
}

/// Oracle run of the rank-based multiplicatively generated strategy.
pub fn ranked_multiplicative_oracle(
    path: &MarketPath,
    fam: &Family,
    dlret_on: bool,
) -> Result<OracleRun, EngineError> {
    share_oracle(
        path,
        |day, _| ranked_portfolio_weights(path, fam, day),
        dlret_on,
    )
}

/// Weights of the top-`m` open market portfolio at `day`: relative
/// capitalization within the top-`m` set for members, zero otherwise.
pub fn top_m_weights(path: &MarketPath, day: usize, m: usize) -> Vec<f64> {
    assert!(m >= 1, "m must be >= 1");
    let w = path.weights_at(day);
    let rv = rank_view(&w);
    let k = m.min(w.len());
    let top_sum: f64 = (1..=k).map(|rank| w[rv.index_at_rank(rank)]).sum();
    (0..w.len())
        .map(|i| {
            if rv.rank_of(i) <= k {
                w[i] / top_sum
            } else {
                0.0
            }
        })
        .collect()
}

fn check_open_market_admissible(
    path: &MarketPath,
    fam: &Family,
    m: usize,
) -> Result<(), EngineError> {
    let not_admissible = |reason: &str| EngineError::NotOpenMarketAdmissible {
        family: fam.spec(),
        m,
        reason: reason.into(),
    };
    if !fam.flags().balanced {
        return Err(not_admissible("family is not balanced"));
    }
    let max_dim = path.epochs().iter().map(|e| e.dim).max().unwrap_or(0);
    if max_dim <= m {
        // The open market is the whole market on every epoch.
        return Ok(());
    }
    match fam {
        Family::TopMSum { m: fam_m } | Family::DiversityTopM { m: fam_m, .. } => {
            if *fam_m <= m {
                Ok(())
            } else {
                Err(not_admissible(
                    "family reaches below rank m while some epoch has more than m stocks",
                ))
            }
        }
        _ => Err(not_admissible(
            "family depends on all components while some epoch has more than m stocks",
        )),
    }
}

/// Log relative wealth of the strategy generated by `fam` measured against
/// the top-`m` open market portfolio, term by term: the reported series is
/// the fieldwise difference between the strategy's ranked decomposition and
/// the decomposition of the `top_m` family itself, so the `c_tm` column is
/// identically zero and `log_v == log_u` is the open-market log wealth.
pub fn open_market_decomposition(
    path: &MarketPath,
    fam: &Family,
    m: usize,
    dlret_on: bool,
) -> Result<DecompositionSeries, EngineError> {
    check_open_market_admissible(path, fam, m)?;
    let strategy = ranked_multiplicative_decomposition(path, fam, dlret_on)?;
    let base_fam = Family::top_m_sum(m)?;
    let base = ranked_multiplicative_decomposition(path, &base_fam, dlret_on)?;

    let t = path.num_days();
    let mut out = DecompositionSeries::with_capacity(t, Baseline::TopM { m });
    for d in 0..t {
        out.push(
            d,
            strategy.log_g[d] - base.log_g[d],
            strategy.eg[d] - base.eg[d],
            0.0,
            strategy.c_g[d] - base.c_g[d],
            strategy.dlret[d] - base.dlret[d],
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::multiplicative_decomposition;

    fn path_with_rank_swap() -> MarketPath {
        // Ranks 2 and 3 swap between days 1 and 2.
        MarketPath::from_panel(&[
            vec![5.0, 3.0, 2.0],
            vec![5.0, 3.0, 2.0],
            vec![5.0, 2.0, 3.0],
            vec![5.0, 2.0, 3.0],
        ])
        .unwrap()
    }

    #[test]
    fn rank_view_examples() {
        let rv = rank_view(&[0.2, 0.5, 0.3]);
        assert_eq!(rv.perm(), &[3, 1, 2]);
        assert_eq!(rv.sort(&[0.2, 0.5, 0.3]), vec![0.5, 0.3, 0.2]);

        let rv = rank_view(&[0.4, 0.4, 0.2]);
        assert_eq!(rv.perm(), &[1, 2, 3]);

        let third = 1.0 / 3.0;
        let rv = rank_view(&[third, third, third]);
        assert_eq!(rv.perm(), &[1, 2, 3]);
        assert_eq!(rv.tie_counts(), &[3, 3, 3]);
    }

    #[test]
    fn rank_view_is_deterministic_and_resorts() {
        let x = [0.25, 0.1, 0.25, 0.4];
        let a = rank_view(&x);
        let b = rank_view(&x);
        assert_eq!(a, b);
        let sorted = a.sort(&x);
        assert!(sorted.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn symmetric_family_matches_unranked_engine() {
        let path = MarketPath::from_panel(&[
            vec![4.0, 2.0, 1.0],
            vec![3.0, 3.5, 1.0],
            vec![3.0, 3.5, 1.0, 2.0],
            vec![2.0, 4.0, 1.5, 2.5],
            vec![2.5, 3.0, 2.0, 2.0 + 1e-9],
        ])
        .unwrap();
        for fam in [
            Family::Equal,
            Family::Entropy,
            Family::diversity(0.25).unwrap(),
            Family::Market,
        ] {
            let ranked = ranked_multiplicative_decomposition(&path, &fam, false).unwrap();
            let plain = multiplicative_decomposition(&path, &fam, false).unwrap();
            for d in 0..path.num_days() {
                assert!(
                    (ranked.log_v[d] - plain.log_v[d]).abs() < 1e-12,
                    "{fam} day {d}"
                );
                assert!((ranked.eg[d] - plain.eg[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_weights_accrue_nothing() {
        let path =
            MarketPath::from_panel(&[vec![2.0, 1.0], vec![4.0, 2.0], vec![8.0, 4.0]]).unwrap();
        let fam = Family::top_m_sum(1).unwrap();
        let series = ranked_multiplicative_decomposition(&path, &fam, false).unwrap();
        for d in 0..3 {
            assert_eq!(series.eg[d], 0.0);
            assert!(series.log_v[d].abs() < 1e-15);
        }
    }

    #[test]
    fn rank_swap_leaks_excess_growth() {
        let path = path_with_rank_swap();
        let fam = Family::top_m_sum(2).unwrap();
        let series = ranked_multiplicative_decomposition(&path, &fam, false).unwrap();
        // Step (1, 2]: yesterday's top-2 holds stocks 0 and 1, worth
        // 0.5 + 0.2 = 0.7 today, against today's top-2 sum 0.8.
        let expected = (0.7f64 / 0.8).ln();
        assert!((series.eg[2] - series.eg[1] - expected).abs() < 1e-12);
        assert!(series.eg[2] < series.eg[1]);
        // The oracle sees the same leak.
        let run = ranked_multiplicative_oracle(&path, &fam, false).unwrap();
        for d in 0..path.num_days() {
            assert!((series.log_v[d] - run.rel_wealth[d].ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn top_m_weights_examples() {
        let path = MarketPath::from_panel(&[vec![0.5, 0.3, 0.2], vec![0.5, 0.3, 0.2]]).unwrap();
        let w = top_m_weights(&path, 0, 2);
        assert!((w[0] - 0.625).abs() < 1e-12);
        assert!((w[1] - 0.375).abs() < 1e-12);
        assert_eq!(w[2], 0.0);

        let w = top_m_weights(&path, 0, 5);
        let market = path.weights_at(0);
        for i in 0..3 {
            assert!((w[i] - market[i]).abs() < 1e-15);
        }

        let tie = MarketPath::from_panel(&[vec![0.4, 0.4, 0.2], vec![0.4, 0.4, 0.2]]).unwrap();
        assert_eq!(top_m_weights(&tie, 0, 1), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn top_m_weights_sum_to_one_with_few_nonzeros() {
        let path =
            MarketPath::from_panel(&[vec![5.0, 1.0, 3.0, 2.0, 4.0], vec![5.0, 1.0, 3.0, 2.0, 4.0]])
                .unwrap();
        for m in 1..=6 {
            let w = top_m_weights(&path, 0, m);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().filter(|&&x| x != 0.0).count() <= m);
        }
    }

    #[test]
    fn open_market_of_its_own_baseline_is_flat() {
        let path = path_with_rank_swap();
        let fam = Family::top_m_sum(2).unwrap();
        let series = open_market_decomposition(&path, &fam, 2, false).unwrap();
        for d in 0..path.num_days() {
            assert_eq!(series.log_v[d], 0.0);
            assert_eq!(series.log_u[d], 0.0);
        }
    }

    #[test]
    fn open_market_with_large_m_equals_unranked_log_u() {
        let path = MarketPath::from_panel(&[
            vec![4.0, 2.0, 1.0],
            vec![3.0, 3.5, 1.0],
            vec![3.0, 3.5, 1.0, 2.0],
            vec![2.0, 4.0, 1.5, 2.5],
        ])
        .unwrap();
        let fam = Family::diversity(0.5).unwrap();
        let series = open_market_decomposition(&path, &fam, 10, false).unwrap();
        let plain = multiplicative_decomposition(&path, &fam, false).unwrap();
        for d in 0..path.num_days() {
            assert!((series.log_v[d] - plain.log_u[d]).abs() < 1e-12);
            assert_eq!(series.c_tm[d], 0.0);
        }
    }

    #[test]
    fn open_market_strategy_never_reaches_below_m() {
        let path = path_with_rank_swap();
        let fam = Family::diversity_top_m(0.5, 2).unwrap();
        for day in 1..path.num_days() {
            let w = ranked_portfolio_weights(&path, &fam, day).unwrap();
            let rv = rank_view(&path.weights_at(day - 1));
            for (i, &weight) in w.iter().enumerate() {
                if rv.rank_of(i) > 2 {
                    assert_eq!(weight, 0.0, "day {day} stock {i}");
                }
            }
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // And the share oracle actually holds nothing below rank m.
        let run = ranked_multiplicative_oracle(&path, &fam, false).unwrap();
        for day in 1..path.num_days() {
            let rv = rank_view(&path.weights_at(day - 1));
            for i in 0..run.shares[day].len() {
                if rv.rank_of(i) > 2 {
                    assert_eq!(run.shares[day][i], 0.0);
                }
            }
        }
    }

    #[test]
    fn inadmissible_families_rejected() {
        let path = path_with_rank_swap();
        assert!(matches!(
            open_market_decomposition(&path, &Family::Entropy, 2, false),
            Err(EngineError::NotOpenMarketAdmissible { .. })
        ));
        assert!(matches!(
            open_market_decomposition(&path, &Family::diversity(0.5).unwrap(), 2, false),
            Err(EngineError::NotOpenMarketAdmissible { .. })
        ));
        let too_deep = Family::diversity_top_m(0.5, 3).unwrap();
        assert!(matches!(
            open_market_decomposition(&path, &too_deep, 2, false),
            Err(EngineError::NotOpenMarketAdmissible { .. })
        ));
    }

    #[test]
    fn ranked_weights_of_balanced_family_use_simple_formula() {
        let path = path_with_rank_swap();
        let fam = Family::top_m_sum(2).unwrap();
        let w = ranked_portfolio_weights(&path, &fam, 2).unwrap();
        let tm = top_m_weights(&path, 1, 2);
        for i in 0..3 {
            assert!((w[i] - tm[i]).abs() < 1e-12);
        }
    }
}
