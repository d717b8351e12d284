use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::features::Window;
use crate::learners::ClassifierKind;
use crate::model::{AffectDimension, ChannelKind};

/// Mean and spread of one cell, with the fold scores they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStat {
    pub mean: f64,
    pub std: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scores: Vec<f64>,
}

/// One table row: a channel and classifier, with a cell per dimension and window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub channel: ChannelKind,
    pub classifier: ClassifierKind,
    /// `[valence, arousal] × [all, l30, l10]`; `None` is unavailable.
    pub cells: [[Option<CellStat>; 3]; 2],
    /// This row holds the channel's best valence score over classifiers and windows.
    pub valence_bold: bool,
    pub arousal_bold: bool,
}

fn dim_index(d: AffectDimension) -> usize {
    match d {
        AffectDimension::Valence => 0,
        AffectDimension::Arousal => 1,
    }
}

fn window_index(w: Window) -> usize {
    match w {
        Window::All => 0,
        Window::L30 => 1,
        Window::L10 => 2,
    }
}

impl ReportRow {
    pub fn empty(channel: ChannelKind, classifier: ClassifierKind) -> Self {
        Self {
            channel,
            classifier,
            cells: Default::default(),
            valence_bold: false,
            arousal_bold: false,
        }
    }

    pub fn cell(&self, d: AffectDimension, w: Window) -> Option<&CellStat> {
        self.cells[dim_index(d)][window_index(w)].as_ref()
    }

    pub fn set(&mut self, d: AffectDimension, w: Window, cell: Option<CellStat>) {
        self.cells[dim_index(d)][window_index(w)] = cell;
    }

    fn best(&self, d: AffectDimension) -> Option<f64> {
        self.cells[dim_index(d)]
            .iter()
            .flatten()
            .map(|c| c.mean)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
    }

    fn bold_mut(&mut self, d: AffectDimension) -> &mut bool {
        match d {
            AffectDimension::Valence => &mut self.valence_bold,
            AffectDimension::Arousal => &mut self.arousal_bold,
        }
    }
}

/// Per-channel, per-classifier F1 table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

/// Decimal places of the CSV form.
pub const CSV_DECIMALS: usize = 6;

impl EvalReport {
    /// Marks, per channel and dimension, the rows that reach the channel's best mean
    /// (compared at CSV precision).
    pub fn mark_bold(&mut self) {
        let round = |v: f64| format!("{v:.CSV_DECIMALS$}").parse::<f64>().unwrap_or(v);
        for d in AffectDimension::ALL {
            let channels: Vec<ChannelKind> = self.rows.iter().map(|r| r.channel).collect();
            for c in channels {
                let best = self
                    .rows
                    .iter()
                    .filter(|r| r.channel == c)
                    .filter_map(|r| r.best(d))
                    .map(round)
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
                for r in self.rows.iter_mut().filter(|r| r.channel == c) {
                    *r.bold_mut(d) = match (best, r.best(d)) {
                        (Some(b), Some(v)) => round(v) == b,
                        _ => false,
                    };
                }
            }
        }
    }

    pub fn row(&self, channel: ChannelKind, classifier: ClassifierKind) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.channel == channel && r.classifier == classifier)
    }

    pub fn csv_header() -> Vec<String> {
        let mut h = vec!["channel".to_string(), "classifier".to_string()];
        for d in AffectDimension::ALL {
            for w in Window::ALL {
                for stat in ["mean", "std"] {
                    h.push(format!("{}_{}_{stat}", d.as_str(), w.as_str()));
                }
            }
        }
        h.push("valence_bold".into());
        h.push("arousal_bold".into());
        h
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(Self::csv_header()).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.channel.slug().to_string(), r.classifier.slug().to_string()];
            for cells in &r.cells {
                for c in cells {
                    match c {
                        Some(c) => {
                            rec.push(format!("{:.CSV_DECIMALS$}", c.mean));
                            rec.push(format!("{:.CSV_DECIMALS$}", c.std));
                        }
                        None => {
                            rec.push("NA".into());
                            rec.push("NA".into());
                        }
                    }
                }
            }
            rec.push(r.valence_bold.to_string());
            rec.push(r.arousal_bold.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    /// Parses the CSV form; fold scores are not part of it.
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| EvalError::Parse { line: 1, reason: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        if header != Self::csv_header() {
            return Err(EvalError::Parse { line: 1, reason: "unexpected header".into() });
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let err = |reason: String| EvalError::Parse { line, reason };
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let channel: ChannelKind = rec[0].parse().map_err(err)?;
            let classifier: ClassifierKind = rec[1].parse().map_err(err)?;
            let mut row = ReportRow::empty(channel, classifier);
            let mut col = 2;
            for d in AffectDimension::ALL {
                for w in Window::ALL {
                    let (m, s) = (&rec[col], &rec[col + 1]);
                    col += 2;
                    let cell = match (m, s) {
                        ("NA", "NA") => None,
                        _ => Some(CellStat {
                            mean: m.parse().map_err(|_| err(format!("bad mean `{m}`")))?,
                            std: s.parse().map_err(|_| err(format!("bad std `{s}`")))?,
                            scores: Vec::new(),
                        }),
                    };
                    row.set(d, w, cell);
                }
            }
            row.valence_bold = rec[col].parse().map_err(|_| err("bad valence_bold".into()))?;
            row.arousal_bold = rec[col + 1].parse().map_err(|_| err("bad arousal_bold".into()))?;
            rows.push(row);
        }
        Ok(Self { rows })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        serde_json::from_str(s).map_err(|e| EvalError::Parse { line: e.line(), reason: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EvalReport {
        let mut rows = Vec::new();
        for (ci, c) in ChannelKind::ALL.into_iter().enumerate() {
            for (ki, k) in ClassifierKind::ALL.into_iter().enumerate() {
                let mut r = ReportRow::empty(c, k);
                for d in AffectDimension::ALL {
                    for (wi, w) in Window::ALL.into_iter().enumerate() {
                        if (ci + ki + wi) % 7 != 3 {
                            let m = ((ci * 31 + ki * 7 + wi * 3) % 100) as f64 / 100.0 + 1.0 / 3.0e4;
                            r.set(d, w, Some(CellStat { mean: m, std: m / 10.0, scores: vec![] }));
                        }
                    }
                }
                rows.push(r);
            }
        }
        let mut rep = EvalReport { rows };
        rep.mark_bold();
        rep
    }

    #[test]
    fn thirty_rows_na_and_round_trip() {
        let r = sample();
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 31);
        assert!(csv.contains(",NA,NA,"));
        let again = EvalReport::from_csv(&csv).unwrap().to_csv();
        assert_eq!(again, csv);
    }

    #[test]
    fn one_bold_row_per_channel_when_unique() {
        let r = sample();
        for c in ChannelKind::ALL {
            let n = r.rows.iter().filter(|x| x.channel == c && x.valence_bold).count();
            assert!(n >= 1);
        }
    }

    #[test]
    fn json_round_trip() {
        let r = sample();
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
    }
}
