use std::fmt::Write;

use affectlens_core::eval::{CellStat, EvalReport};
use affectlens_core::features::Window;
use affectlens_core::stats::AgreementReport;
use affectlens_core::AffectDimension;
use anyhow::Context;

use super::{Ctx, Stage, StageReport};
use crate::fsutil::write_atomic;

fn cell(c: Option<&CellStat>, bold: bool) -> String {
    match c {
        Some(c) if bold => format!("**{:.3} ± {:.3}**", c.mean, c.std),
        Some(c) => format!("{:.3} ± {:.3}", c.mean, c.std),
        None => "NA".to_string(),
    }
}

/// Markdown table of F1 means and spreads. Each channel's best rows are bold.
pub fn results_table(report: &EvalReport) -> String {
    let mut s = String::from("| Channel | Classifier |");
    for d in AffectDimension::ALL {
        for w in Window::ALL {
            let _ = write!(s, " {} {} |", d.as_str(), w.as_str());
        }
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---|".repeat(2 * Window::ALL.len()));
    s.push('\n');
    for r in &report.rows {
        let _ = write!(s, "| {} | {} |", r.channel.display_name(), r.classifier);
        for d in AffectDimension::ALL {
            let bold = match d {
                AffectDimension::Valence => r.valence_bold,
                AffectDimension::Arousal => r.arousal_bold,
            };
            for w in Window::ALL {
                let _ = write!(s, " {} |", cell(r.cell(d, w), bold));
            }
        }
        s.push('\n');
    }
    s
}

fn agreement_section(a: &AgreementReport) -> String {
    let mut s = format!("{} raters, {} items.\n\n", a.n_raters, a.n_items);
    s.push_str("| Dimension | Coefficient | Metric | Thresholding | Value |\n|---|---|---|---|---|\n");
    for r in &a.agreement {
        let value = match (r.value, &r.omitted) {
            (Some(v), _) => format!("{v:.3}"),
            (None, Some(why)) => format!("omitted: {why}"),
            (None, None) => "NA".to_string(),
        };
        let _ = writeln!(
            s,
            "| {} | {:?} | {:?} | {:?} | {value} |",
            r.dimension.as_str(),
            r.coefficient,
            r.metric,
            r.thresholding
        );
    }
    let _ = writeln!(s, "\nCorrelations (BH at q = {}):\n", a.fdr_q);
    s.push_str("| Source | r | p | Significant |\n|---|---|---|---|\n");
    for c in &a.correlations {
        let _ = writeln!(s, "| {} | {:.3} | {:.4} | {} |", c.source, c.r, c.p, if c.significant { "yes" } else { "no" });
    }
    s.push_str("\nHigh vs Low expert labels (rank-sum):\n\n| Dimension | n High | n Low | mean High | mean Low | p |\n|---|---|---|---|---|---|\n");
    for g in &a.comparisons {
        let p = match (&g.test, &g.omitted) {
            (Some(t), _) => format!("{:.4}{}", t.p, if t.exact { " (exact)" } else { "" }),
            (None, Some(why)) => format!("omitted: {why}"),
            (None, None) => "NA".to_string(),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.3} | {:.3} | {p} |",
            g.dimension.as_str(),
            g.n_high,
            g.n_low,
            g.mean_high,
            g.mean_low
        );
    }
    s
}

/// Renders `report.md` from the evaluation and agreement outputs.
pub(super) fn run(ctx: &Ctx) -> anyhow::Result<StageReport> {
    let mut report = StageReport::new(Stage::Report);
    let out = ctx.out();
    let results_path = out.join("results.json");
    let text = std::fs::read_to_string(&results_path)
        .with_context(|| format!("{} not found; run eval first", results_path.display()))?;
    let results = EvalReport::from_json(&text)?;
    let mut md = String::from("# Affect recognition results\n\nF1 mean ± std over the cross-validation runs. Bold marks each channel's best classifier.\n\n");
    md.push_str(&results_table(&results));
    match std::fs::read_to_string(out.join("agreement.json")) {
        Ok(text) => {
            let a: AgreementReport = serde_json::from_str(&text).context("agreement.json")?;
            md.push_str("\n## Rater agreement\n\n");
            md.push_str(&agreement_section(&a));
        }
        Err(_) => report.skip("agreement.json not found; run stats first".to_string()),
    }
    write_atomic(&out.join("report.md"), md.as_bytes())?;
    println!("{md}");
    report.computed += 1;
    Ok(report)
}
