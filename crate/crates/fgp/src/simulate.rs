//! Synthetic market paths with controlled dimension dynamics.
//!
//! Between dimensional events every stock follows independent lognormal
//! daily steps. Dimensional events are discretized exponential clocks
//! (per-day Bernoulli with probability `1 - exp(-rate)`) except for splits,
//! which trigger deterministically when the previous day's largest weight
//! exceeds the threshold. At most one dimensional event happens per day.

use crate::market::{MarketError, MarketPath};
use chrono::{Days, NaiveDate};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad simulation config: {0}")]
    BadConfig(String),
    #[error("degenerate market on day {day}: dimension would hit zero")]
    DegenerateConfig { day: usize },
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimModel {
    BirthDeath,
    SplitMerge,
    Combined,
}

impl SimModel {
    pub fn parse(s: &str) -> Option<SimModel> {
        match s {
            "birth-death" | "birth_death" => Some(SimModel::BirthDeath),
            "split-merge" | "split_merge" => Some(SimModel::SplitMerge),
            "combined" => Some(SimModel::Combined),
            _ => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            SimModel::BirthDeath => "birth-death",
            SimModel::SplitMerge => "split-merge",
            SimModel::Combined => "combined",
        }
    }
}

/// How an entering stock's capitalization is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntrantCapRule {
    /// Median of the incumbent capitalizations that day.
    MedianCap,
    FixedCap(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: SimModel,
    /// Number of trading days, at least 2.
    pub horizon: usize,
    /// Initial dimension.
    pub n0: usize,
    /// Per-day exponential arrival rate of entries.
    pub birth_rate: f64,
    /// Per-day exponential departure rate.
    pub death_rate: f64,
    /// The largest stock splits when its weight exceeds this.
    pub split_threshold: f64,
    /// Per-day exponential rate of mergers between two non-largest stocks.
    pub merge_rate: f64,
    /// Per-stock daily log-return drift.
    pub drift: f64,
    /// Per-stock daily log-return volatility, positive.
    pub volatility: f64,
    pub entrant_cap: EntrantCapRule,
    /// Range of the split proportion taken by the first child.
    pub split_range: (f64, f64),
    /// Probability that a death's delisting return is missing; otherwise 0.
    pub dlret_missing_prob: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            model: SimModel::BirthDeath,
            horizon: 250,
            n0: 10,
            birth_rate: 0.02,
            death_rate: 0.02,
            split_threshold: 0.5,
            merge_rate: 0.02,
            drift: 0.0,
            volatility: 0.02,
            entrant_cap: EntrantCapRule::MedianCap,
            split_range: (0.3, 0.7),
            dlret_missing_prob: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::BadConfig(msg));
        if self.horizon < 2 {
            return bad(format!("horizon {} < 2", self.horizon));
        }
        if self.n0 < 1 {
            return bad("n0 must be >= 1".into());
        }
        if !(self.volatility > 0.0) {
            return bad(format!("volatility {} must be > 0", self.volatility));
        }
        for (name, r) in [
            ("birth_rate", self.birth_rate),
            ("death_rate", self.death_rate),
            ("merge_rate", self.merge_rate),
        ] {
            if !(r >= 0.0) || !r.is_finite() {
                return bad(format!("{name} {r} must be a finite nonnegative rate"));
            }
        }
        if !(self.split_threshold > 0.0 && self.split_threshold <= 1.0) {
            return bad(format!(
                "split_threshold {} must be in (0, 1]",
                self.split_threshold
            ));
        }
        let (lo, hi) = self.split_range;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad(format!(
                "split_range ({lo}, {hi}) must satisfy 0 < lo < hi < 1"
            ));
        }
        if !(0.0..=1.0).contains(&self.dlret_missing_prob) {
            return bad(format!(
                "dlret_missing_prob {} must be in [0, 1]",
                self.dlret_missing_prob
            ));
        }
        if let EntrantCapRule::FixedCap(c) = self.entrant_cap {
            if !(c > 0.0) {
                return bad(format!("fixed entrant cap {c} must be > 0"));
            }
        }
        Ok(())
    }
}

/// Dimensional events, recorded for tests and diagnostics. Capitalizations
/// refer to the event day after the daily returns were applied.
#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    Birth {
        day: usize,
        index: usize,
        cap: f64,
    },
    Death {
        day: usize,
        index: usize,
        dlret: Option<f64>,
    },
    Split {
        day: usize,
        parent: usize,
        child: usize,
        parent_cap: f64,
    },
    Merge {
        day: usize,
        absorber: usize,
        absorbed: usize,
        combined_cap: f64,
    },
}

pub fn simulate(config: &SimConfig) -> Result<MarketPath, SimError> {
    simulate_with_events(config).map(|(path, _)| path)
}

pub fn simulate_with_events(config: &SimConfig) -> Result<(MarketPath, Vec<SimEvent>), SimError> {
    config.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let p_birth = 1.0 - (-config.birth_rate).exp();
    let p_death = 1.0 - (-config.death_rate).exp();
    let p_merge = 1.0 - (-config.merge_rate).exp();

    let mut next_id = 0usize;
    let fresh = |next_id: &mut usize| {
        *next_id += 1;
        format!("s{:04}", *next_id)
    };

    let mut caps_by_day: Vec<Vec<f64>> = Vec::with_capacity(config.horizon);
    let mut ids_by_day: Vec<Vec<String>> = Vec::with_capacity(config.horizon);
    let mut dlrets: Vec<(usize, String, Option<f64>)> = Vec::new();
    let mut events = Vec::new();

    caps_by_day.push(vec![1.0; config.n0]);
    ids_by_day.push((0..config.n0).map(|_| fresh(&mut next_id)).collect());

    for day in 1..config.horizon {
        let prev_caps = &caps_by_day[day - 1];
        let prev_ids = &ids_by_day[day - 1];
        let n = prev_caps.len();

        let mut caps: Vec<f64> = prev_caps
            .iter()
            .map(|c| {
                let z: f64 = rng.sample(StandardNormal);
                c * (config.drift + config.volatility * z).exp()
            })
            .collect();
        let mut ids = prev_ids.clone();

        let split_triggered = match config.model {
            SimModel::SplitMerge | SimModel::Combined => {
                let total: f64 = prev_caps.iter().sum();
                let max = prev_caps.iter().cloned().fold(f64::MIN, f64::max);
                max / total > config.split_threshold
            }
            SimModel::BirthDeath => false,
        };

        let birth_allowed = matches!(config.model, SimModel::BirthDeath | SimModel::Combined);
        let death_allowed = birth_allowed;
        let merge_allowed = matches!(config.model, SimModel::SplitMerge | SimModel::Combined);

        if split_triggered {
            // Largest stock of the previous day; ties go to the smaller index.
            let parent = (0..n)
                .max_by(|&a, &b| {
                    prev_caps[a]
                        .partial_cmp(&prev_caps[b])
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .expect("non-empty day");
            let parent_cap = caps[parent];
            let share: f64 = rng.gen_range(config.split_range.0..config.split_range.1);
            caps[parent] = share * parent_cap;
            caps.push((1.0 - share) * parent_cap);
            ids.push(fresh(&mut next_id));
            events.push(SimEvent::Split {
                day,
                parent,
                child: caps.len() - 1,
                parent_cap,
            });
        } else if birth_allowed && rng.gen_bool(p_birth) {
            let cap = match config.entrant_cap {
                EntrantCapRule::MedianCap => median(&caps),
                EntrantCapRule::FixedCap(c) => c,
            };
            caps.push(cap);
            ids.push(fresh(&mut next_id));
            events.push(SimEvent::Birth {
                day,
                index: caps.len() - 1,
                cap,
            });
        } else if death_allowed && rng.gen_bool(p_death) {
            if n == 1 {
                return Err(SimError::DegenerateConfig { day });
            }
            let victim = rng.gen_range(0..n);
            let dlret = if rng.gen_bool(config.dlret_missing_prob) {
                None
            } else {
                Some(0.0)
            };
            dlrets.push((day, ids[victim].clone(), dlret));
            events.push(SimEvent::Death {
                day,
                index: victim,
                dlret,
            });
            caps.remove(victim);
            ids.remove(victim);
        } else if merge_allowed && n >= 3 && rng.gen_bool(p_merge) {
            // Merge two stocks other than the largest one.
            let largest = (0..n)
                .max_by(|&a, &b| {
                    prev_caps[a]
                        .partial_cmp(&prev_caps[b])
                        .unwrap()
                        .then(b.cmp(&a))
                })
                .expect("non-empty day");
            let mut pool: Vec<usize> = (0..n).filter(|&i| i != largest).collect();
            let first = pool.remove(rng.gen_range(0..pool.len()));
            let second = pool[rng.gen_range(0..pool.len())];
            let (absorber, absorbed) = (first.min(second), first.max(second));
            caps[absorber] += caps[absorbed];
            let combined_cap = caps[absorber];
            dlrets.push((day, ids[absorbed].clone(), Some(0.0)));
            caps.remove(absorbed);
            ids.remove(absorbed);
            events.push(SimEvent::Merge {
                day,
                absorber,
                absorbed,
                combined_cap,
            });
        }

        caps_by_day.push(caps);
        ids_by_day.push(ids);
    }

    let base = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid base date");
    let dates: Vec<NaiveDate> = (0..config.horizon)
        .map(|d| {
            base.checked_add_days(Days::new(d as u64))
                .expect("date in range")
        })
        .collect();
    let path = MarketPath::from_days(caps_by_day, ids_by_day, &dlrets, Some(dates))?;
    Ok((path, events))
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_events_means_constant_dimension() {
        let config = SimConfig {
            birth_rate: 0.0,
            death_rate: 0.0,
            horizon: 100,
            n0: 5,
            ..SimConfig::default()
        };
        let path = simulate(&config).unwrap();
        assert_eq!(path.jump_days(), &[] as &[usize]);
        assert_eq!(path.num_epochs(), 1);
        for d in 0..path.num_days() {
            assert_eq!(path.dim(d), 5);
        }
    }

    #[test]
    fn unreachable_split_threshold_never_resets() {
        let config = SimConfig {
            model: SimModel::SplitMerge,
            split_threshold: 1.0,
            merge_rate: 0.0,
            horizon: 200,
            n0: 4,
            ..SimConfig::default()
        };
        let path = simulate(&config).unwrap();
        assert_eq!(path.jump_days(), &[] as &[usize]);
    }

    #[test]
    fn same_seed_same_path() {
        let config = SimConfig {
            model: SimModel::Combined,
            horizon: 300,
            n0: 8,
            seed: 42,
            ..SimConfig::default()
        };
        let a = simulate(&config).unwrap();
        let b = simulate(&config).unwrap();
        assert_eq!(a, b);
        let c = simulate(&SimConfig { seed: 43, ..config }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn splits_only_after_threshold_crossing() {
        let config = SimConfig {
            model: SimModel::SplitMerge,
            split_threshold: 0.4,
            merge_rate: 0.0,
            horizon: 400,
            n0: 3,
            volatility: 0.05,
            seed: 7,
            ..SimConfig::default()
        };
        let path = simulate(&config).unwrap();
        assert!(
            !path.jump_days().is_empty(),
            "seed never crossed the threshold"
        );
        for &day in path.jump_days() {
            let w = path.weights_at(day - 1);
            let max = w.iter().cloned().fold(f64::MIN, f64::max);
            assert!(max > 0.4, "reset on day {day} without trigger");
        }
    }

    #[test]
    fn split_and_merge_conserve_capitalization() {
        let config = SimConfig {
            model: SimModel::SplitMerge,
            split_threshold: 0.35,
            merge_rate: 0.3,
            horizon: 500,
            n0: 5,
            volatility: 0.05,
            seed: 3,
            ..SimConfig::default()
        };
        let (path, events) = simulate_with_events(&config).unwrap();
        let mut seen_split = false;
        let mut seen_merge = false;
        for event in &events {
            match *event {
                SimEvent::Split {
                    day,
                    parent,
                    child,
                    parent_cap,
                } => {
                    seen_split = true;
                    let children = path.caps(day)[parent] + path.caps(day)[child];
                    assert!((children - parent_cap).abs() < 1e-12 * parent_cap);
                }
                SimEvent::Merge {
                    day,
                    absorber,
                    combined_cap,
                    ..
                } => {
                    seen_merge = true;
                    assert_eq!(path.caps(day)[absorber], combined_cap);
                }
                _ => unreachable!("split-merge model produced {event:?}"),
            }
        }
        assert!(seen_split && seen_merge, "seed produced too few events");
    }

    #[test]
    fn deaths_record_delistings() {
        let config = SimConfig {
            model: SimModel::BirthDeath,
            birth_rate: 0.0,
            death_rate: 0.1,
            horizon: 120,
            n0: 30,
            dlret_missing_prob: 0.5,
            seed: 11,
            ..SimConfig::default()
        };
        let (path, events) = simulate_with_events(&config).unwrap();
        let deaths = events
            .iter()
            .filter(|e| matches!(e, SimEvent::Death { .. }))
            .count();
        assert_eq!(path.delistings().len(), deaths);
        assert!(deaths > 0);
        assert!(path.delistings().iter().any(|d| d.dlret.is_none()));
        assert!(path.delistings().iter().any(|d| d.dlret == Some(0.0)));
    }

    #[test]
    fn dimension_one_death_degenerates() {
        let config = SimConfig {
            model: SimModel::BirthDeath,
            birth_rate: 0.0,
            death_rate: 50.0,
            horizon: 10,
            n0: 1,
            seed: 0,
            ..SimConfig::default()
        };
        assert!(matches!(
            simulate(&config),
            Err(SimError::DegenerateConfig { .. })
        ));
    }

    #[test]
    fn invalid_configs_rejected() {
        let ok = SimConfig::default();
        assert!(simulate(&SimConfig {
            horizon: 1,
            ..ok.clone()
        })
        .is_err());
        assert!(simulate(&SimConfig {
            n0: 0,
            ..ok.clone()
        })
        .is_err());
        assert!(simulate(&SimConfig {
            volatility: 0.0,
            ..ok.clone()
        })
        .is_err());
        assert!(simulate(&SimConfig {
            split_threshold: 0.0,
            ..ok.clone()
        })
        .is_err());
        assert!(simulate(&SimConfig {
            split_range: (0.7, 0.3),
            ..ok
        })
        .is_err());
    }
}
