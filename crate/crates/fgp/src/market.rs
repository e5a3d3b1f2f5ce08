//! Discrete-time market paths whose number of listed stocks changes over time.
//!
//! A [`MarketPath`] is a panel of daily capitalization vectors. Days on which
//! the stock universe changes (an entry, exit, split or merger) are *reset
//! days*; the stretches of constant universe between resets are *epochs*.
//! Within an epoch, index `i` refers to the same company on every day.
//!
//! All engine-facing quantities live here: market weights, the total-cap
//! ratio [`SigmaRatio`] at each reset, and the per-reset delisting records.

use chrono::NaiveDate;
use std::ops::Deref;
use thiserror::Error;

/// Tolerance used when validating that weight vectors lie on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("capitalization must be positive: day {day}, stock {index}, got {value}")]
    NonPositiveCap {
        day: usize,
        index: usize,
        value: f64,
    },
    #[error("day {day} has an empty capitalization vector")]
    EmptyDay { day: usize },
    #[error("a market path needs at least two days, got {0}")]
    TooFewDays(usize),
    #[error("invalid delisting on day {day}: {reason}")]
    BadDelisting { day: usize, reason: String },
    #[error("invalid weight vector: {0}")]
    BadWeights(String),
    #[error("per-day metadata length {got} does not match {expected} days")]
    MetadataMismatch { got: usize, expected: usize },
}

/// A point on the open simplex: positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self, MarketError> {
        if w.is_empty() {
            return Err(MarketError::BadWeights("empty vector".into()));
        }
        let mut sum = 0.0;
        for (i, &x) in w.iter().enumerate() {
            if !x.is_finite() || x <= 0.0 || x > 1.0 {
                return Err(MarketError::BadWeights(format!(
                    "component {i} = {x} is not in (0, 1]"
                )));
            }
            sum += x;
        }
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(MarketError::BadWeights(format!("sum {sum} != 1")));
        }
        Ok(WeightVector(w))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for WeightVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Ratio of total capitalization on the day before a reset to the total on
/// the reset day itself. Products of these give the relative wealth of the
/// self-financing market portfolio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaRatio(f64);

impl SigmaRatio {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<SigmaRatio> for f64 {
    fn from(s: SigmaRatio) -> f64 {
        s.0
    }
}

/// A stock's disappearance from the panel. `index` refers to the stock's
/// position in the *previous* day's vector; `dlret` is the delisting return,
/// `None` when missing from the source data.
#[derive(Debug, Clone, PartialEq)]
pub struct Delisting {
    pub day: usize,
    pub index: usize,
    pub id: String,
    pub dlret: Option<f64>,
}

/// A maximal stretch of days with a constant stock universe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Epoch {
    /// 1-based epoch number.
    pub index: usize,
    pub start_day: usize,
    /// Inclusive.
    pub end_day: usize,
    pub dim: usize,
}

/// An immutable discrete market history of stochastic dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    caps: Vec<Vec<f64>>,
    totals: Vec<f64>,
    ids: Vec<Vec<String>>,
    /// Reset days; `reset_days[0] == 0` by convention, later entries are the
    /// days whose universe differs from the previous day.
    reset_days: Vec<usize>,
    epochs: Vec<Epoch>,
    epoch_of: Vec<usize>,
    delistings: Vec<Delisting>,
    dates: Option<Vec<NaiveDate>>,
}

/// An exit supplied alongside an anonymous panel: on `day`, the stock at
/// `index` in the previous day's vector is gone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelExit {
    pub day: usize,
    pub index: usize,
    pub dlret: Option<f64>,
}

impl MarketPath {
    /// Builds a path from daily capitalization vectors alone. Resets are the
    /// days whose vector length differs from the previous day; on a shrink,
    /// exits are assumed to come from the tail.
    pub fn from_panel(caps_by_day: &[Vec<f64>]) -> Result<Self, MarketError> {
        Self::from_panel_with_exits(caps_by_day, &[])
    }

    /// Like [`MarketPath::from_panel`], with explicit exits. Days carrying an
    /// exit are treated as resets even when the dimension is unchanged (the
    /// universe changed, so per-index identities cannot be carried over).
    pub fn from_panel_with_exits(
        caps_by_day: &[Vec<f64>],
        exits: &[PanelExit],
    ) -> Result<Self, MarketError> {
        let n_days = caps_by_day.len();
        let mut ids: Vec<Vec<String>> = Vec::with_capacity(n_days);
        let mut next_id = 0usize;
        let fresh = |next_id: &mut usize| {
            *next_id += 1;
            format!("c{:04}", *next_id)
        };
        let mut dlrets: Vec<(usize, String, Option<f64>)> = Vec::new();

        for (day, caps) in caps_by_day.iter().enumerate() {
            if caps.is_empty() {
                return Err(MarketError::EmptyDay { day });
            }
            if day == 0 {
                ids.push((0..caps.len()).map(|_| fresh(&mut next_id)).collect());
                continue;
            }
            let prev = &ids[day - 1];
            let mut day_exits: Vec<&PanelExit> = exits.iter().filter(|e| e.day == day).collect();
            day_exits.sort_by_key(|e| e.index);
            for pair in day_exits.windows(2) {
                if pair[0].index == pair[1].index {
                    return Err(MarketError::BadDelisting {
                        day,
                        reason: format!("duplicate exit index {}", pair[0].index),
                    });
                }
            }
            for e in &day_exits {
                if e.index >= prev.len() {
                    return Err(MarketError::BadDelisting {
                        day,
                        reason: format!("exit index {} out of range {}", e.index, prev.len()),
                    });
                }
                dlrets.push((day, prev[e.index].clone(), e.dlret));
            }
            let mut survivors: Vec<String> = prev
                .iter()
                .enumerate()
                .filter(|(i, _)| !day_exits.iter().any(|e| e.index == *i))
                .map(|(_, id)| id.clone())
                .collect();
            if survivors.len() > caps.len() {
                // Unrecorded shrink: drop from the tail.
                survivors.truncate(caps.len());
            }
            while survivors.len() < caps.len() {
                survivors.push(fresh(&mut next_id));
            }
            ids.push(survivors);
        }

        Self::from_days(caps_by_day.to_vec(), ids, &dlrets, None)
    }

    /// Core constructor: per-day capitalizations plus per-day stock ids.
    /// A day whose id vector differs from the previous day's is a reset;
    /// ids present yesterday but not today become delisting events, with
    /// returns looked up in `dlrets` by `(day, id)`.
    pub(crate) fn from_days(
        caps: Vec<Vec<f64>>,
        ids: Vec<Vec<String>>,
        dlrets: &[(usize, String, Option<f64>)],
        dates: Option<Vec<NaiveDate>>,
    ) -> Result<Self, MarketError> {
        if caps.len() < 2 {
            return Err(MarketError::TooFewDays(caps.len()));
        }
        if ids.len() != caps.len() {
            return Err(MarketError::MetadataMismatch {
                got: ids.len(),
                expected: caps.len(),
            });
        }
        if let Some(d) = &dates {
            if d.len() != caps.len() {
                return Err(MarketError::MetadataMismatch {
                    got: d.len(),
                    expected: caps.len(),
                });
            }
        }
        let mut totals = Vec::with_capacity(caps.len());
        for (day, v) in caps.iter().enumerate() {
            if v.is_empty() {
                return Err(MarketError::EmptyDay { day });
            }
            if v.len() != ids[day].len() {
                return Err(MarketError::MetadataMismatch {
                    got: ids[day].len(),
                    expected: v.len(),
                });
            }
            let mut total = 0.0;
            for (index, &c) in v.iter().enumerate() {
                if !c.is_finite() || c <= 0.0 {
                    return Err(MarketError::NonPositiveCap {
                        day,
                        index,
                        value: c,
                    });
                }
                total += c;
            }
            totals.push(total);
        }

        let mut reset_days = vec![0usize];
        let mut delistings = Vec::new();
        for day in 1..caps.len() {
            if ids[day] != ids[day - 1] {
                reset_days.push(day);
            }
            for (index, id) in ids[day - 1].iter().enumerate() {
                if !ids[day].contains(id) {
                    let dlret = dlrets
                        .iter()
                        .find(|(d, i, _)| *d == day && i == id)
                        .and_then(|(_, _, r)| *r);
                    delistings.push(Delisting {
                        day,
                        index,
                        id: id.clone(),
                        dlret,
                    });
                }
            }
        }
        for (day, id, _) in dlrets {
            if !delistings.iter().any(|d| d.day == *day && &d.id == id) {
                return Err(MarketError::BadDelisting {
                    day: *day,
                    reason: format!("stock {id} did not exit on this day"),
                });
            }
        }

        let mut epochs = Vec::with_capacity(reset_days.len());
        let mut epoch_of = vec![0usize; caps.len()];
        for (k, &start) in reset_days.iter().enumerate() {
            let end = if k + 1 < reset_days.len() {
                reset_days[k + 1] - 1
            } else {
                caps.len() - 1
            };
            epochs.push(Epoch {
                index: k + 1,
                start_day: start,
                end_day: end,
                dim: caps[start].len(),
            });
            for slot in epoch_of.iter_mut().take(end + 1).skip(start) {
                *slot = k;
            }
        }

        Ok(MarketPath {
            caps,
            totals,
            ids,
            reset_days,
            epochs,
            epoch_of,
            delistings,
            dates,
        })
    }

    pub fn num_days(&self) -> usize {
        self.caps.len()
    }

    pub fn dim(&self, day: usize) -> usize {
        self.caps[day].len()
    }

    pub fn caps(&self, day: usize) -> &[f64] {
        &self.caps[day]
    }

    pub fn total_cap(&self, day: usize) -> f64 {
        self.totals[day]
    }

    pub fn ids(&self, day: usize) -> &[String] {
        &self.ids[day]
    }

    pub fn date(&self, day: usize) -> Option<NaiveDate> {
        self.dates.as_ref().map(|d| d[day])
    }

    pub fn weights_at(&self, day: usize) -> WeightVector {
        let total = self.totals[day];
        WeightVector(self.caps[day].iter().map(|c| c / total).collect())
    }

    /// Reset days including the conventional `reset_days()[0] == 0`.
    pub fn reset_days(&self) -> &[usize] {
        &self.reset_days
    }

    /// Days on which the universe actually changed (reset days except day 0).
    pub fn jump_days(&self) -> &[usize] {
        &self.reset_days[1..]
    }

    pub fn is_reset_day(&self, day: usize) -> bool {
        day > 0 && self.epoch_of[day] != self.epoch_of[day - 1]
    }

    pub fn epochs(&self) -> &[Epoch] {
        &self.epochs
    }

    pub fn num_epochs(&self) -> usize {
        self.epochs.len()
    }

    /// 0-based index into [`MarketPath::epochs`] for the given day.
    pub fn epoch_of(&self, day: usize) -> usize {
        self.epoch_of[day]
    }

    /// Total-capitalization ratio at the `k`-th reset, `1 <= k <= jump count`:
    /// total on day `reset_days()[k] - 1` over total on day `reset_days()[k]`.
    pub fn sigma(&self, k: usize) -> SigmaRatio {
        assert!(
            k >= 1 && k < self.reset_days.len(),
            "reset index {k} out of range"
        );
        let day = self.reset_days[k];
        SigmaRatio(self.totals[day - 1] / self.totals[day])
    }

    /// Product of `sigma(k)` over `k_from..=k_to`; empty ranges give 1.
    pub fn sigma_product(&self, k_from: usize, k_to: usize) -> f64 {
        if k_from > k_to {
            return 1.0;
        }
        (k_from..=k_to).map(|k| self.sigma(k).value()).product()
    }

    /// Product of all sigma ratios at resets up to and including `day`.
    pub fn sigma_product_through_day(&self, day: usize) -> f64 {
        self.reset_days[1..]
            .iter()
            .take_while(|&&r| r <= day)
            .enumerate()
            .map(|(i, _)| self.sigma(i + 1).value())
            .product()
    }

    pub fn delistings(&self) -> &[Delisting] {
        &self.delistings
    }

    pub fn delistings_on(&self, day: usize) -> impl Iterator<Item = &Delisting> {
        self.delistings.iter().filter(move |d| d.day == day)
    }

    /// Copy of the path with every delisting return replaced by `f(dlret)`.
    pub(crate) fn map_dlrets(&self, f: impl Fn(Option<f64>) -> Option<f64>) -> MarketPath {
        let mut out = self.clone();
        for d in &mut out.delistings {
            d.dlret = f(d.dlret);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn p0() -> MarketPath {
        MarketPath::from_panel(&[
            vec![2.0, 2.0],
            vec![3.0, 1.0],
            vec![3.0, 1.0, 1.0],
            vec![4.0, 2.0, 2.0],
        ])
        .unwrap()
    }

    #[test]
    fn p0_resets_and_epochs() {
        let path = p0();
        assert_eq!(path.reset_days(), &[0, 2]);
        assert_eq!(path.jump_days(), &[2]);
        assert_eq!(
            path.epochs()
                .iter()
                .map(|e| (e.index, e.dim))
                .collect::<Vec<_>>(),
            vec![(1, 2), (2, 3)]
        );
        assert_eq!(path.epoch_of(1), 0);
        assert_eq!(path.epoch_of(2), 1);
        assert!(path.is_reset_day(2));
        assert!(!path.is_reset_day(1));
    }

    #[test]
    fn constant_dimension_single_epoch() {
        let path = MarketPath::from_panel(&[vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(path.jump_days(), &[] as &[usize]);
        assert_eq!(path.num_epochs(), 1);
        assert_eq!(
            path.epochs()[0],
            Epoch {
                index: 1,
                start_day: 0,
                end_day: 1,
                dim: 1
            }
        );
    }

    #[test]
    fn zero_cap_rejected() {
        let err = MarketPath::from_panel(&[vec![1.0, 2.0], vec![0.0, 2.0]]).unwrap_err();
        assert!(matches!(
            err,
            MarketError::NonPositiveCap {
                day: 1,
                index: 0,
                ..
            }
        ));
    }

    #[test]
    fn empty_day_rejected() {
        let err = MarketPath::from_panel(&[vec![1.0], vec![]]).unwrap_err();
        assert!(matches!(err, MarketError::EmptyDay { day: 1 }));
    }

    #[test]
    fn one_day_rejected() {
        let err = MarketPath::from_panel(&[vec![1.0]]).unwrap_err();
        assert!(matches!(err, MarketError::TooFewDays(1)));
    }

    #[test]
    fn weights_examples() {
        let path = p0();
        assert_eq!(&*path.weights_at(1), &[0.75, 0.25]);
        assert_eq!(&*path.weights_at(0), &[0.5, 0.5]);
        assert_eq!(&*path.weights_at(2), &[0.6, 0.2, 0.2]);
    }

    #[test]
    fn weights_sum_to_one() {
        let path = p0();
        for day in 0..path.num_days() {
            let w = path.weights_at(day);
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x > 0.0 && x <= 1.0));
        }
    }

    #[test]
    fn sigma_p0() {
        let path = p0();
        assert_eq!(path.sigma(1).value(), 0.8);
        assert_eq!(path.sigma_product(1, 0), 1.0);
        assert_eq!(path.sigma_product_through_day(1), 1.0);
        assert_eq!(path.sigma_product_through_day(3), 0.8);
    }

    #[test]
    fn sigma_product_two_jumps() {
        // Totals 4 -> 5 at the first jump and 8 -> 6 at the second.
        let path = MarketPath::from_panel(&[
            vec![2.0, 2.0],
            vec![2.0, 2.0, 1.0],
            vec![4.0, 2.0, 2.0],
            vec![4.0, 2.0],
        ])
        .unwrap();
        assert!((path.sigma_product(1, 2) - (4.0 / 5.0) * (8.0 / 6.0)).abs() < 1e-15);
    }

    #[test]
    fn sigma_telescopes_against_totals() {
        let path = MarketPath::from_panel(&[
            vec![1.0, 2.0],
            vec![1.5, 2.5],
            vec![1.0, 1.0, 1.0],
            vec![2.0, 1.0, 1.0],
            vec![2.0, 1.0],
            vec![2.5, 1.5],
        ])
        .unwrap();
        let direct: f64 = path
            .jump_days()
            .iter()
            .map(|&d| (path.total_cap(d - 1) / path.total_cap(d)).ln())
            .sum();
        let via_sigma: f64 = (1..path.reset_days().len())
            .map(|k| path.sigma(k).value().ln())
            .sum();
        assert!((direct - via_sigma).abs() < 1e-14);
    }

    #[test]
    fn from_panel_idempotent() {
        let path = p0();
        let rebuilt = MarketPath::from_panel(
            &(0..path.num_days())
                .map(|d| path.caps(d).to_vec())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(rebuilt.reset_days(), path.reset_days());
        assert_eq!(rebuilt.epochs(), path.epochs());
    }

    #[test]
    fn explicit_exit_records_delisting() {
        let path = MarketPath::from_panel_with_exits(
            &[vec![1.0, 2.0, 3.0], vec![1.0, 3.0]],
            &[PanelExit {
                day: 1,
                index: 1,
                dlret: Some(-0.35),
            }],
        )
        .unwrap();
        assert_eq!(path.delistings().len(), 1);
        let d = &path.delistings()[0];
        assert_eq!((d.day, d.index, d.dlret), (1, 1, Some(-0.35)));
        // Survivors keep their order.
        assert_eq!(path.ids(1)[0], path.ids(0)[0]);
        assert_eq!(path.ids(1)[1], path.ids(0)[2]);
    }

    #[test]
    fn same_dimension_exit_plus_entry_is_a_reset() {
        let path = MarketPath::from_panel_with_exits(
            &[vec![1.0, 2.0], vec![1.0, 5.0]],
            &[PanelExit {
                day: 1,
                index: 1,
                dlret: None,
            }],
        )
        .unwrap();
        assert_eq!(path.jump_days(), &[1]);
        assert_eq!(path.delistings().len(), 1);
        assert_eq!(path.num_epochs(), 2);
    }

    #[test]
    fn unrecorded_shrink_exits_tail() {
        let path = MarketPath::from_panel(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(path.delistings().len(), 1);
        assert_eq!(path.delistings()[0].index, 2);
        assert_eq!(path.delistings()[0].dlret, None);
    }

    #[test]
    fn weight_vector_validation() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![1.5, -0.5]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }
}
