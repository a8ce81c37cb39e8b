//! Markdown summary of a run.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::Result;

use crate::manifest::{CheckKind, Manifest, Status};

fn status_word(s: Status) -> &'static str {
    match s {
        Status::NotRun => "not run",
        Status::Completed => "completed",
        Status::Cached => "cached",
        Status::Failed => "FAILED",
    }
}

fn read_csv(path: &Path) -> Option<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).ok()?;
    let header = r.headers().ok()?.iter().map(String::from).collect();
    let rows = r.records().filter_map(|x| x.ok()).map(|x| x.iter().map(String::from).collect()).collect();
    Some((header, rows))
}

fn table(out: &mut String, header: &[String], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

/// Writes `summary.md` into `out` and returns its text. Stages without
/// artifacts are listed as gaps.
pub fn emit_report(manifest: &Manifest, out: &Path) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "# Run summary\n");
    let _ = writeln!(s, "Tool version {}, config hash `{}`.\n", manifest.tool_version, manifest.config_hash);

    let _ = writeln!(s, "## Stages\n");
    let rows: Vec<Vec<String>> = manifest
        .stages
        .iter()
        .map(|st| {
            let failed = st.checks.iter().filter(|c| !c.pass).count();
            vec![
                st.name.clone(),
                status_word(st.status).into(),
                format!("{:.2}", st.wall_time_s),
                format!("{}/{}", st.checks.len() - failed, st.checks.len()),
                st.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    table(&mut s, &["stage", "status", "wall time (s)", "checks passed", "error"].map(String::from), &rows);

    let _ = writeln!(s, "## Checks\n");
    let mut rows = vec![];
    for st in &manifest.stages {
        for c in &st.checks {
            rows.push(vec![
                st.name.clone(),
                c.name.clone(),
                format!("{:.3e}", c.value),
                format!("{:.3e}", c.limit),
                if c.pass { "pass" } else { "FAIL" }.into(),
                match c.kind {
                    CheckKind::Hard => "hard",
                    CheckKind::Trend => "trend",
                }
                .into(),
                format!("`{}`", c.source),
            ]);
        }
    }
    if rows.is_empty() {
        let _ = writeln!(s, "No checks recorded.\n");
    } else {
        table(&mut s, &["stage", "check", "value", "limit", "result", "kind", "source"].map(String::from), &rows);
    }

    let ran = |name: &str| manifest.stage(name).is_some_and(|st| matches!(st.status, Status::Completed | Status::Cached));

    let _ = writeln!(s, "## Identities\n");
    match read_csv(&out.join("identities_checks.csv")) {
        Some((h, rows)) if ran("verify-identities") => {
            let _ = writeln!(s, "From `identities_checks.csv`, one row per point, identity and path.\n");
            table(&mut s, &h, &rows);
        }
        _ => {
            let _ = writeln!(s, "Gap: identities were not verified.\n");
        }
    }

    let _ = writeln!(s, "## Decompositions\n");
    let mut any = false;
    for tag in ["te", "contraction"] {
        let p = out.join(format!("decompose_{tag}.json"));
        if !ran("decompose") {
            break;
        }
        if let Ok(text) = std::fs::read_to_string(&p) {
            let v: serde_json::Value = serde_json::from_str(&text)?;
            let sv: Vec<String> = v["singvals_R"]
                .as_array()
                .map(|a| a.iter().take(4).filter_map(|x| x.as_f64()).map(|x| format!("{x:.3e}")).collect())
                .unwrap_or_default();
            let head = format!("- `{tag}` (m = {}, branch {})", v["m"], v["branch"].as_str().unwrap_or("?"));
            let svals = format!("[{}] (`decompose_{tag}.json:singvals_R`)", sv.join(", "));
            let _ = if tag == "te" {
                writeln!(
                    s,
                    "{head}: unitarity defect of V {:.3e} (`decompose_te.json:unitarity_defect`), leading σ(R) {svals}",
                    v["unitarity_defect"].as_f64().unwrap_or(f64::NAN),
                )
            } else {
                writeln!(
                    s,
                    "{head}: ‖A‖ = {:.12} (`decompose_contraction.json:norm_A`), leading σ(S) {svals}",
                    v["norm_A"].as_f64().unwrap_or(f64::NAN),
                )
            };
            any = true;
        }
    }
    if !any {
        let _ = writeln!(s, "Gap: no decomposition was run.");
    }
    s.push('\n');

    let _ = writeln!(s, "## Dynamics\n");
    match (ran("orbit"), read_csv(&out.join("crowding.csv"))) {
        (true, Some((h, rows))) => {
            let _ = writeln!(
                s,
                "Trend surrogates only: a finite-dimensional operator is never hypercyclic. From `crowding.csv`.\n"
            );
            table(&mut s, &h, &rows);
        }
        _ => {
            let _ = writeln!(s, "Gap: orbit statistics were not computed.\n");
        }
    }

    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("summary.md"), &s)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_manifest_reports_every_stage_not_run() {
        let dir = tempfile::tempdir().unwrap();
        let text = emit_report(&Manifest::default(), dir.path()).unwrap();
        assert_eq!(text.matches("| not run |").count(), 6);
        assert!(text.contains("Gap: identities were not verified"));
        assert!(dir.path().join("summary.md").exists());
    }
}
