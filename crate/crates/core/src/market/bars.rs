use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trades::{Side, TradeRecord};
use crate::error::{Error, Result};

/// Timeframes, in seconds, of the market evaluation grid.
pub const DEFAULT_TIMEFRAMES: [u64; 7] = [5, 10, 15, 20, 25, 30, 60];

/// One fixed-timeframe bucket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    /// Bucket start, milliseconds since epoch.
    pub t_open: i64,
    /// Signed order flow: buy volume minus sell volume.
    pub x: f64,
    /// Simple return of the bucket close against the previous non-empty close.
    pub y: f64,
    /// Total traded volume.
    pub z: f64,
}

impl Bar {
    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Aggregate timestamp-sorted trades into epoch-aligned buckets of
/// `timeframe_s` seconds, from the first trade's bucket through the last's.
///
/// Empty buckets emit zeros and carry the close forward; the first bucket has
/// no previous close and gets `y = 0`.
pub fn aggregate_bars(trades: &[TradeRecord], timeframe_s: u64) -> Result<Vec<Bar>> {
    if timeframe_s == 0 {
        return Err(Error::InvalidConfig("timeframe must be positive".into()));
    }
    let (first, last) = match (trades.first(), trades.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::EmptyInput),
    };
    if trades.windows(2).any(|w| w[1].timestamp_ms < w[0].timestamp_ms) {
        return Err(Error::SchemaMismatch("trades must be sorted by timestamp".into()));
    }
    let width = timeframe_s as i64 * 1000;
    let bucket = |t: i64| t.div_euclid(width);
    let b0 = bucket(first.timestamp_ms);
    let n = (bucket(last.timestamp_ms) - b0 + 1) as usize;

    let mut bars = Vec::with_capacity(n);
    let mut prev_close: Option<f64> = None;
    let mut it = trades.iter().peekable();
    for k in 0..n as i64 {
        let (mut buy, mut sell, mut close) = (0.0, 0.0, None);
        while let Some(t) = it.next_if(|t| bucket(t.timestamp_ms) == b0 + k) {
            match t.side {
                Side::Buy => buy += t.size,
                Side::Sell => sell += t.size,
            }
            close = Some(t.price);
        }
        let y = match (close, prev_close) {
            (Some(c), Some(p)) => (c - p) / p,
            _ => 0.0,
        };
        if close.is_some() {
            prev_close = close;
        }
        bars.push(Bar { t_open: (b0 + k) * width, x: buy - sell, y, z: buy + sell });
    }
    Ok(bars)
}

/// Write bars as CSV `t_open,x,y,z`.
pub fn write_bars(bars: &[Bar], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for b in bars {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bars(path: &Path) -> Result<Vec<Bar>> {
    let file = std::fs::File::open(path).map_err(|source| Error::UnreadableFile { path: path.to_path_buf(), source })?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|r| r.map_err(|e| Error::SchemaMismatch(format!("bar file {}: {e}", path.display()))))
        .collect()
}
