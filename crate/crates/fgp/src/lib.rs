//! Functionally generated portfolios in equity markets whose number of
//! listed stocks changes over time.
//!
//! The library models a discrete market history of stochastic dimension
//! ([`market::MarketPath`]), generates self-financing strategies from
//! dimension-indexed generating functions ([`generate::Family`]), and
//! decomposes their relative wealth exactly into generating-function,
//! excess-growth and dimensional-correction terms ([`engine`], with the
//! rank-based and open-market variants in [`ranked`]). Every decomposition
//! is verifiable against a brute-force share-level simulator
//! ([`engine::share_oracle`]). Synthetic markets come from [`simulate`],
//! real panels from [`ingest`].

// `!(x > 0.0)` guards must catch NaN; `x <= 0.0` would wave it through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod generate;
pub mod ingest;
pub mod market;
pub mod ranked;
pub mod series;
pub mod simulate;

pub use engine::{
    additive_decomposition, additive_oracle, additive_u, multiplicative_decomposition,
    multiplicative_decomposition_by_epoch, multiplicative_oracle, multiplicative_oracle_by_epoch,
    portfolio_weights, self_financing_market, share_oracle, EngineError, OracleRun,
};
pub use generate::{balance_residual, bregman, Family, FamilyFlags, GeneratorError};
pub use ingest::{load_csv, save_csv, to_csv_string, write_csv, DlretPolicy, IngestError};
pub use market::{Delisting, Epoch, MarketError, MarketPath, PanelExit, SigmaRatio, WeightVector};
pub use ranked::{
    open_market_decomposition, rank_view, ranked_multiplicative_decomposition,
    ranked_multiplicative_oracle, ranked_portfolio_weights, top_m_weights, RankView,
};
pub use series::{AdditiveSeries, Baseline, DecompositionSeries, SeriesError};
pub use simulate::{
    simulate, simulate_with_events, EntrantCapRule, SimConfig, SimError, SimEvent, SimModel,
};
