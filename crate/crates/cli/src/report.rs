//! Markdown report rendered from a finished output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde_json::Value;

fn load(dir: &Path, name: &str) -> anyhow::Result<Option<Value>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

/// Renders a CSV file as a markdown table.
fn csv_table(dir: &Path, name: &str) -> anyhow::Result<Option<String>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    let mut lines = text.lines();
    let Some(header) = lines.next() else { return Ok(None) };
    let cols = header.split(',').count();
    let mut out = format!("| {} |\n|{}\n", header.replace(',', " | "), "---|".repeat(cols));
    for line in lines {
        let cells: Vec<String> = line.split(',').map(fmt_cell).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    Ok(Some(out))
}

fn fmt_cell(s: &str) -> String {
    match s.parse::<f64>() {
        Ok(x) if s.contains('.') || s.contains('e') => format!("{x:.4}"),
        _ => s.to_string(),
    }
}

fn num(v: &Value) -> String {
    v.as_f64().map_or_else(|| v.to_string(), |x| format!("{x:.4}"))
}

fn section(out: &mut String, title: &str, body: Option<String>) {
    if let Some(body) = body {
        let _ = write!(out, "## {title}\n\n{body}\n");
    }
}

/// Writes `report.md` into `dir` and returns its path.
pub fn render(dir: &Path) -> anyhow::Result<PathBuf> {
    let Some(manifest) = load(dir, "manifest.json")? else {
        bail!("no manifest.json in {}", dir.display());
    };
    let experiment = manifest["experiment"].as_str().unwrap_or("unknown");
    let mut out = format!(
        "# subq report: {experiment}\n\nseed {}, subq {}\n\n",
        manifest["seed"], manifest["version"].as_str().unwrap_or("?")
    );
    match experiment {
        "synthetic" => {
            section(&mut out, "Interval coverage", csv_table(dir, "table1.csv")?);
            section(&mut out, "True vs estimated submodels", csv_table(dir, "fig2_factorial.csv")?);
            if let Some(imp) = load(dir, "fig4_importance.json")? {
                let mut body = String::from("| submodel | mean single | mean bagged |\n|---|---|---|\n");
                for (i, label) in imp["labels"].as_array().into_iter().flatten().enumerate() {
                    let _ = writeln!(
                        body,
                        "| {} | {} | {} |",
                        label.as_str().unwrap_or("?"),
                        num(&imp["mean_single"][i]),
                        num(&imp["mean_bagged"][i])
                    );
                }
                let _ = writeln!(
                    body,
                    "\nTop two are X1 and p in {} of {} bagged and {} single-tree macro-replications.\n\n![importance](fig4_importance.svg)",
                    imp["top_two_x1_p"]["bagged"], imp["macro_reps"], imp["top_two_x1_p"]["single"]
                );
                section(&mut out, "Submodel importance", Some(body));
            }
            section(&mut out, "Variance reduction from bagging", csv_table(dir, "table2_vrf.csv")?);
        }
        "contact-center" => {
            if let Some(s) = load(dir, "summary.json")? {
                let body = format!(
                    "Mode {}. The SU interval is at least as wide as the no-SU interval in {} of {} epochs.\n\n\
                     Ranking: {}.\n\nState-average bias interval: [{}, {}].\n",
                    s["mode"].as_str().unwrap_or("?"),
                    s["su_wider_epochs"],
                    s["epochs"],
                    s["ranking"].as_array().into_iter().flatten().filter_map(Value::as_str).collect::<Vec<_>>().join(", "),
                    num(&s["bias_interval"]["lower"]),
                    num(&s["bias_interval"]["upper"])
                );
                section(&mut out, "Summary", Some(body));
            }
            section(
                &mut out,
                "Epochs",
                csv_table(dir, "epochs.csv")?.map(|t| t + "\n![epochs](epoch_intervals.svg)\n"),
            );
            section(
                &mut out,
                "Aggregate importance",
                csv_table(dir, "importance.csv")?.map(|t| t + "\n![importance](importance.svg)\n"),
            );
        }
        "custom" => {
            if let Some(a) = load(dir, "analysis.json")? {
                let body = format!(
                    "{} configurations, {} outputs, grand mean {}.\n\nQuantile interval: [{}, {}] at alpha {}.\n\nAleatoric variance: {}.\n",
                    a["configurations"],
                    a["outputs"],
                    num(&a["grand_mean"]),
                    num(&a["interval"]["lower"]),
                    num(&a["interval"]["upper"]),
                    a["interval"]["alpha"],
                    num(&a["aleatoric"])
                );
                section(&mut out, "Summary", Some(body));
            }
            section(
                &mut out,
                "Importance",
                csv_table(dir, "importance.csv")?.map(|t| t + "\n![importance](importance.svg)\n"),
            );
        }
        other => bail!("unknown experiment `{other}` in manifest"),
    }
    let path = dir.join("report.md");
    std::fs::write(&path, out)?;
    Ok(path)
}
