use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Buyer-initiated (taker bought).
    Buy,
    /// Seller-initiated (taker sold).
    Sell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub timestamp_ms: i64,
    pub price: f64,
    pub size: f64,
    pub side: Side,
}

/// Validated trades in timestamp order plus the count of rejected rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrades {
    pub trades: Vec<TradeRecord>,
    pub skipped: usize,
}

const COLUMNS: [&str; 4] = ["timestamp_ms", "price", "size", "side"];

fn parse_row(row: &csv::StringRecord, idx: &[usize; 4]) -> Option<TradeRecord> {
    let field = |k: usize| row.get(idx[k]).map(str::trim);
    let timestamp_ms = field(0)?.parse().ok()?;
    let price: f64 = field(1)?.parse().ok()?;
    let size: f64 = field(2)?.parse().ok()?;
    let side = match field(3)?.to_ascii_lowercase().as_str() {
        "buy" => Side::Buy,
        "sell" => Side::Sell,
        _ => return None,
    };
    (price.is_finite() && price > 0.0 && size.is_finite() && size > 0.0).then_some(TradeRecord {
        timestamp_ms,
        price,
        size,
        side,
    })
}

/// Parse trade CSV with header `timestamp_ms,price,size,side` (columns in any
/// order, extra columns ignored). Malformed rows are skipped and counted.
/// Output is sorted by timestamp; ties keep file order.
pub fn read_trades<R: Read>(reader: R) -> Result<ParsedTrades> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 4];
    for (slot, col) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == col)
            .ok_or_else(|| Error::SchemaMismatch(format!("trade file has no `{col}` column")))?;
    }
    let mut trades = Vec::new();
    let mut skipped = 0;
    for row in rdr.records() {
        match row.ok().as_ref().and_then(|r| parse_row(r, &idx)) {
            Some(t) => trades.push(t),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} malformed trade rows");
    }
    trades.sort_by_key(|t| t.timestamp_ms);
    Ok(ParsedTrades { trades, skipped })
}

pub fn parse_trades(path: &Path) -> Result<ParsedTrades> {
    let file = File::open(path).map_err(|source| Error::UnreadableFile { path: path.to_path_buf(), source })?;
    read_trades(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_rows() {
        let csv = "timestamp_ms,price,size,side\n0,100,2,buy\n3000,101,1,sell\n4000,100.5,0.5,buy\n";
        let p = read_trades(csv.as_bytes()).unwrap();
        assert_eq!(p.skipped, 0);
        assert_eq!(p.trades.len(), 3);
        assert_eq!(p.trades[1], TradeRecord { timestamp_ms: 3000, price: 101.0, size: 1.0, side: Side::Sell });
    }

    #[test]
    fn invalid_rows_are_counted() {
        let csv = "timestamp_ms,price,size,side\n0,100,0,buy\n1,100,-1,buy\n2,0,1,buy\n3,x,1,sell\n4,100,1,hold\n5,100,1,SELL\n";
        let p = read_trades(csv.as_bytes()).unwrap();
        assert_eq!(p.skipped, 5);
        assert_eq!(p.trades.len(), 1);
        assert_eq!(p.trades[0].side, Side::Sell);
    }

    #[test]
    fn sorting_is_stable() {
        let csv = "side,size,price,timestamp_ms\nbuy,1,10,5\nsell,2,11,1\nbuy,3,12,5\nsell,4,13,1\n";
        let p = read_trades(csv.as_bytes()).unwrap();
        let sizes: Vec<f64> = p.trades.iter().map(|t| t.size).collect();
        assert_eq!(sizes, [2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let csv = "timestamp_ms,price,side\n0,100,buy\n";
        assert!(matches!(read_trades(csv.as_bytes()), Err(Error::SchemaMismatch(_))));
    }

    #[test]
    fn missing_file_is_unreadable() {
        assert!(matches!(parse_trades(Path::new("/nonexistent/trades.csv")), Err(Error::UnreadableFile { .. })));
    }
}
