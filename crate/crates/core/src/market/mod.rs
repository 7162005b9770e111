//! Market data ingestion: trade records, fixed-timeframe `(x, y, z)` bars,
//! calibration scaling onto the training distribution and sliding test windows.
//!
//! Order flow `x` is signed base-asset volume (buy minus sell), `y` is the
//! simple return of bucket closes and `z` is total volume.

mod bars;
mod scaling;
mod synthetic;
mod trades;
mod windows;

pub use bars::{aggregate_bars, read_bars, write_bars, Bar, DEFAULT_TIMEFRAMES};
pub use scaling::{fit_scaler, reference_moments, Moments, Scaler};
pub use synthetic::synthetic_market;
pub use trades::{parse_trades, read_trades, ParsedTrades, Side, TradeRecord};
pub use windows::{build_test_windows, TestWindow, WindowSet, DEFAULT_CALIBRATION_BARS};
