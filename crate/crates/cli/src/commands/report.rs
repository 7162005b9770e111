use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chaoscast::metrics::ScalingFit;

use super::{files_under, Ctx};
use crate::cli::ReportArgs;
use crate::manifest::RunRecord;
use crate::svg::{Chart, Mark, Series};

/// Most points drawn in one scatter cloud.
const MAX_DOTS: usize = 5000;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> anyhow::Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r.records().map(|rec| rec.map(|r| r.iter().map(String::from).collect())).collect::<Result<_, _>>()?;
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r.get(i).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN)).collect())
    }

    fn xy(&self, x: &str, y: &str) -> Vec<(f64, f64)> {
        match (self.col(x), self.col(y)) {
            (Some(a), Some(b)) => a.into_iter().zip(b).collect(),
            _ => Vec::new(),
        }
    }
}

fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Series {
    Series { label: label.into(), points, mark: Mark::Line }
}

fn chart(title: &str, x: &str, y: &str, series: Vec<Series>) -> Chart {
    Chart { title: title.into(), x_label: x.into(), y_label: y.into(), series }
}

fn save(out: &mut Vec<PathBuf>, path: PathBuf, chart: &Chart) -> anyhow::Result<()> {
    std::fs::write(&path, chart.render())?;
    out.push(path);
    Ok(())
}

fn file_name(p: &Path) -> &str {
    p.file_name().and_then(|n| n.to_str()).unwrap_or("")
}

/// `balance_tf<T>_h<H>.csv` or `balance_tf<T>_baseline.csv` → (T, label).
fn balance_key(name: &str) -> Option<(u64, String)> {
    let rest = name.strip_prefix("balance_tf")?.strip_suffix(".csv")?;
    let (tf, which) = rest.split_once('_')?;
    let label = match which.strip_prefix('h') {
        Some(h) => format!("horizon {h}"),
        None => which.to_string(),
    };
    Some((tf.parse().ok()?, label))
}

fn markdown_table(t: &Table) -> String {
    let idx = |n: &str| t.header.iter().position(|h| h == n);
    let (Some(tf), Some(h), Some(ex), Some(base), Some(mark)) =
        (idx("timeframe_s"), idx("horizon"), idx("excess_return"), idx("baseline_return"), idx("mark"))
    else {
        return String::new();
    };
    let mut horizons: Vec<u64> = t.rows.iter().filter_map(|r| r[h].parse().ok()).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut by_tf: BTreeMap<u64, (String, BTreeMap<u64, String>)> = BTreeMap::new();
    for r in &t.rows {
        let (Ok(tfv), Ok(hv)) = (r[tf].parse::<u64>(), r[h].parse::<u64>()) else { continue };
        let cell = match (r[ex].as_str(), r[mark].as_str()) {
            ("", _) => "n/a".to_string(),
            (v, "best") => format!("**{v}**"),
            (v, "second") => format!("_{v}_"),
            (v, _) => v.to_string(),
        };
        let entry = by_tf.entry(tfv).or_default();
        if !r[base].is_empty() {
            entry.0 = r[base].clone();
        }
        entry.1.insert(hv, cell);
    }
    let mut s = String::from("| timeframe (s) | baseline |");
    for hv in &horizons {
        s += &format!(" excess h{hv} |");
    }
    s += "\n|---|---|";
    s += &"---|".repeat(horizons.len());
    s.push('\n');
    for (tfv, (b, cells)) in &by_tf {
        s += &format!("| {tfv} | {b} |");
        for hv in &horizons {
            s += &format!(" {} |", cells.get(hv).map_or("", String::as_str));
        }
        s.push('\n');
    }
    s
}

/// Render every recognised CSV under the directory. CSV stays canonical;
/// the SVGs are derived views.
pub fn run(ctx: &Ctx, args: &ReportArgs) -> anyhow::Result<RunRecord> {
    let root = args.from.clone().unwrap_or_else(|| ctx.out_dir.clone());
    let files: Vec<PathBuf> = files_under(&root)?.into_iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).collect();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut ic_curves: BTreeMap<PathBuf, Vec<Series>> = BTreeMap::new();
    let mut balances: BTreeMap<(PathBuf, u64), Vec<Series>> = BTreeMap::new();
    let mut acfs: BTreeMap<PathBuf, Vec<Series>> = BTreeMap::new();

    for path in &files {
        let name = file_name(path);
        let dir = path.parent().unwrap_or(&root).to_path_buf();
        let table = Table::read(path)?;
        let used = match name {
            "metrics.csv" => {
                let ic: Vec<Series> = ["ic_x", "ic_y", "ic_z"].iter().map(|c| line(*c, table.xy("samples_seen", c))).collect();
                save(&mut outputs, dir.join("ic.svg"), &chart("Held-out IC during training", "training samples", "IC", ic))?;
                let loss = vec![line("train", table.xy("samples_seen", "train_loss")), line("validation", table.xy("samples_seen", "val_loss"))];
                save(&mut outputs, dir.join("loss.svg"), &chart("Loss", "training samples", "MSE", loss))?;
                true
            }
            "scaling_points.csv" => {
                let pts: Vec<(f64, f64)> = table.xy("horizon", "samples_to_threshold").into_iter().map(|(h, s)| (h, s.log10())).collect();
                let mut series = vec![Series { label: "crossings".into(), points: pts.clone(), mark: Mark::Dots }];
                let fit_path = dir.join("scaling_fit.json");
                if let Ok(text) = std::fs::read(&fit_path) {
                    let fit: ScalingFit = serde_json::from_slice(&text)?;
                    let hs: Vec<f64> = pts.iter().map(|p| p.0).filter(|h| h.is_finite()).collect();
                    let (lo, hi) = hs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &h| (a.0.min(h), a.1.max(h)));
                    if lo.is_finite() {
                        series.push(line("fit", vec![(lo, fit.slope * lo + fit.intercept), (hi, fit.slope * hi + fit.intercept)]));
                    }
                    inputs.push(fit_path);
                }
                save(&mut outputs, dir.join("scaling.svg"), &chart("Samples to reach the IC threshold", "horizon", "log10 samples", series))?;
                true
            }
            "autocorrelation_summary.csv" => {
                let series = ["lag1_x", "lag1_y", "lag1_z"].iter().map(|c| line(*c, table.xy("interval", c))).collect();
                save(&mut outputs, dir.join("autocorrelation_summary.svg"), &chart("Lag-1 autocorrelation by interval", "resampling interval", "autocorrelation", series))?;
                true
            }
            "autocorrelation.csv" => {
                let label = file_name(&dir).to_string();
                let parent = dir.parent().unwrap_or(&root).to_path_buf();
                acfs.entry(parent).or_default().push(line(label, table.xy("lag", "x")));
                true
            }
            "report.csv" => {
                let md = markdown_table(&table);
                if !md.is_empty() {
                    let p = dir.join("report_table.md");
                    std::fs::write(&p, md)?;
                    outputs.push(p);
                }
                true
            }
            n if n.starts_with("ic_curve_h") => {
                let h = n.trim_start_matches("ic_curve_h").trim_end_matches(".csv");
                ic_curves.entry(dir).or_default().push(line(format!("horizon {h}"), table.xy("samples_seen", "ic")));
                true
            }
            n if n.starts_with("balance_tf") => match balance_key(n) {
                Some((tf, label)) => {
                    balances.entry((dir, tf)).or_default().push(line(label, table.xy("t_pred", "cumulative_return")));
                    true
                }
                None => false,
            },
            n if n.contains("attractor") => {
                let mut pts = table.xy("x", "z");
                let stride = pts.len().div_ceil(MAX_DOTS).max(1);
                pts = pts.into_iter().step_by(stride).collect();
                let svg = path.with_extension("svg");
                let series = vec![Series { label: "x vs z".into(), points: pts, mark: Mark::Dots }];
                save(&mut outputs, svg, &chart(n.trim_end_matches(".csv"), "x", "z", series))?;
                true
            }
            _ => false,
        };
        if used {
            inputs.push(path.clone());
        }
    }
    for (dir, series) in ic_curves {
        save(&mut outputs, dir.join("ic_curves.svg"), &chart("IC by horizon", "training samples", "IC(y)", series))?;
    }
    for ((dir, tf), series) in balances {
        save(&mut outputs, dir.join(format!("balance_tf{tf}.svg")), &chart(&format!("Balance, {tf}s bars"), "t_pred (ms)", "cumulative return", series))?;
    }
    for (dir, series) in acfs {
        save(&mut outputs, dir.join("autocorrelation.svg"), &chart("Autocorrelation of x", "lag", "autocorrelation", series))?;
    }
    println!("rendered {} artifacts from {} files", outputs.len(), inputs.len());
    Ok(RunRecord { config: serde_json::json!({ "from": root }), inputs, outputs })
}
