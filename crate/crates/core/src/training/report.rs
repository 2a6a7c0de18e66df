use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::MetricSet;

/// Mean and population standard deviation of one metric across folds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Spread::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Spread { mean, std: var.sqrt() }
    }

    /// Percent scale, two decimals: `"73.62 ± 4.11"`.
    pub fn percent(&self) -> String {
        format_mean_std(self.mean, self.std)
    }
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{:.2} ± {:.2}", mean * 100.0, std * 100.0)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpreadSet {
    pub f1_macro: Spread,
    pub f1_weighted: Spread,
    pub accuracy: Spread,
    pub precision: Spread,
    pub recall: Spread,
}

impl SpreadSet {
    pub fn over(folds: &[MetricSet]) -> Self {
        let column = |i: usize| Spread::of(&folds.iter().map(|m| m.values()[i]).collect::<Vec<_>>());
        SpreadSet {
            f1_macro: column(0),
            f1_weighted: column(1),
            accuracy: column(2),
            precision: column(3),
            recall: column(4),
        }
    }

    pub fn values(&self) -> [Spread; 5] {
        [self.f1_macro, self.f1_weighted, self.accuracy, self.precision, self.recall]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub validation_size: usize,
    pub metrics: MetricSet,
    /// Metrics restricted to each language's validation authors.
    pub per_language: BTreeMap<String, MetricSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldMetrics>,
    pub summary: SpreadSet,
    pub per_language: BTreeMap<String, SpreadSet>,
}

const HEADERS: [&str; 6] = ["", "F1-Macro", "F1-Weighted", "Accuracy", "Precision", "Recall"];

impl CvReport {
    pub fn new(folds: Vec<FoldMetrics>) -> Self {
        let summary = SpreadSet::over(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>());
        let mut by_lang: BTreeMap<String, Vec<MetricSet>> = BTreeMap::new();
        for f in &folds {
            for (lang, m) in &f.per_language {
                by_lang.entry(lang.clone()).or_default().push(*m);
            }
        }
        let per_language = by_lang.into_iter().map(|(l, ms)| (l, SpreadSet::over(&ms))).collect();
        CvReport {
            folds,
            summary,
            per_language,
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Aligned text table: one row per fold, then mean ± std overall and per
    /// language.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<Vec<String>> = vec![HEADERS.iter().map(|s| s.to_string()).collect()];
        for f in &self.folds {
            let mut row = vec![format!("fold {}", f.fold)];
            row.extend(f.metrics.values().iter().map(|v| format!("{:.2}", v * 100.0)));
            rows.push(row);
        }
        let spread_row = |name: String, s: &SpreadSet| {
            let mut row = vec![name];
            row.extend(s.values().iter().map(Spread::percent));
            row
        };
        rows.push(spread_row("mean".into(), &self.summary));
        for (lang, s) in &self.per_language {
            rows.push(spread_row(format!("mean [{lang}]"), s));
        }
        let widths: Vec<usize> = (0..HEADERS.len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| {
                    let pad = " ".repeat(w - cell.chars().count());
                    if c == 0 {
                        format!("{cell}{pad}")
                    } else {
                        format!("{pad}{cell}")
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fold(i: usize, acc: f64) -> FoldMetrics {
        FoldMetrics {
            fold: i,
            validation_size: 8,
            metrics: MetricSet::from_values([acc; 5]),
            per_language: BTreeMap::from([("en".to_string(), MetricSet::from_values([acc; 5]))]),
        }
    }

    #[test]
    fn identical_folds_have_zero_std() {
        let r = CvReport::new((0..5).map(|i| fold(i, 0.8)).collect());
        assert_eq!(r.summary.accuracy.std, 0.0);
        assert!((r.summary.accuracy.mean - 0.8).abs() < 1e-12);
    }

    #[test]
    fn mean_matches_definition() {
        let accs = [0.5, 0.75, 0.9, 1.0, 0.625];
        let r = CvReport::new(accs.iter().enumerate().map(|(i, &a)| fold(i, a)).collect());
        let mean = accs.iter().sum::<f64>() / 5.0;
        assert!((r.summary.accuracy.mean - mean).abs() <= 1e-12);
        let lo = accs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(r.summary.accuracy.mean >= lo && r.summary.accuracy.std >= 0.0);
    }

    #[test]
    fn percent_formatting() {
        let s = Spread::of(&[0.7362 - 0.0411, 0.7362 + 0.0411]);
        assert_eq!(s.percent(), "73.62 ± 4.11");
        assert_eq!(format_mean_std(1.0, 0.0), "100.00 ± 0.00");
    }

    #[test]
    fn table_is_aligned() {
        let r = CvReport::new(vec![fold(0, 0.5), fold(1, 1.0)]);
        let table = r.to_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 1 + 2 + 1 + 1);
        assert!(lines[0].contains("F1-Macro") && lines[0].ends_with("Recall"));
        assert!(lines[3].starts_with("mean") && lines[3].contains("75.00 ± 25.00"));
        let width = lines[1].chars().count();
        assert!(lines[1..3].iter().all(|l| l.chars().count() == width));
        let back: CvReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
