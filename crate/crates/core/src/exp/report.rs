use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::Provenance;
use crate::error::{Error, Result};
use crate::eval::matrix::UserModel;
use crate::eval::CrossMatrix;

#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON of `body` with the provenance block merged in.
pub fn to_json_artifact<T: Serialize>(provenance: &Provenance, body: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Artifact { provenance, body })?;
    s.push('\n');
    Ok(s)
}

pub fn write_json_artifact<T: Serialize>(path: &Path, provenance: &Provenance, body: &T) -> Result<()> {
    fs::write(path, to_json_artifact(provenance, body)?)?;
    Ok(())
}

/// One heatmap annotation: the cell mean to two decimals.
pub fn annotation(v: f64) -> String {
    format!("{v:.2}")
}

/// `(metric, reconstructor, extractor, annotation)` rows shared by the
/// figure and its CSV.
fn heatmap_entries(m: &CrossMatrix) -> Vec<(&'static str, UserModel, UserModel, String)> {
    let mut out = Vec::new();
    for (metric, pick) in [
        ("accuracy", (|c: &crate::eval::MatrixCell| c.accuracy.mean) as fn(&_) -> f64),
        ("value_diff_scaled", |c| c.value_diff_scaled.mean),
    ] {
        for rec in UserModel::ALL {
            for ext in UserModel::ALL {
                out.push((metric, rec, ext, annotation(pick(m.cell(ext, rec)))));
            }
        }
    }
    out
}

pub fn heatmap_csv(m: &CrossMatrix, provenance: &Provenance) -> Result<String> {
    check_complete(m)?;
    let mut s = provenance.header_line();
    s.push('\n');
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["domain", "metric", "reconstructor", "extractor", "annotation"])?;
    let domain = m.config.domain.kind.name();
    for (metric, rec, ext, a) in heatmap_entries(m) {
        w.write_record([domain, metric, rec.name(), ext.name(), &a])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    s.push_str(&String::from_utf8(bytes).expect("csv is utf-8"));
    Ok(s)
}

fn check_complete(m: &CrossMatrix) -> Result<()> {
    if m.cells.len() != 4 || m.cells.iter().any(|c| c.n == 0) {
        return Err(Error::Config("cannot draw a heatmap of an empty or partial matrix".into()));
    }
    Ok(())
}

/// Sequential blue ramp over [0, 1].
fn shade(v: f64) -> (String, &'static str) {
    let t = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let lo = [247.0, 251.0, 255.0];
    let hi = [8.0, 48.0, 107.0];
    let c: Vec<u8> = (0..3).map(|i| (lo[i] + (hi[i] - lo[i]) * t).round() as u8).collect();
    let text = if t > 0.5 { "#ffffff" } else { "#000000" };
    (format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2]), text)
}

/// Two annotated 2×2 panels (accuracy, scaled value difference); rows are
/// the reconstruction model, columns the extraction model.
pub fn heatmap_svg(m: &CrossMatrix, provenance: &Provenance) -> Result<String> {
    check_complete(m)?;
    let cell = 90.0;
    let left = 70.0;
    let top = 60.0;
    let gap = 60.0;
    let panel_w = 2.0 * cell;
    let width = left + 2.0 * panel_w + gap + 20.0;
    let height = top + 2.0 * cell + 50.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="13">"#
    )
    .unwrap();
    writeln!(
        s,
        "<!-- config_hash={} master_seed={} version={} -->",
        provenance.config_hash, provenance.master_seed, provenance.version
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="18" font-size="14" font-weight="bold">{} (n = {})</text>"#,
        left,
        m.config.domain.kind,
        m.cells[0].n
    )
    .unwrap();
    let entries = heatmap_entries(m);
    for (p, metric) in ["accuracy", "value_diff_scaled"].iter().enumerate() {
        let x0 = left + p as f64 * (panel_w + gap);
        let title = if *metric == "accuracy" {
            "accuracy"
        } else {
            "scaled value difference"
        };
        writeln!(s, r#"<text x="{x0}" y="38">{title}</text>"#).unwrap();
        for (j, ext) in UserModel::ALL.iter().enumerate() {
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{} summary</text>"#,
                x0 + (j as f64 + 0.5) * cell,
                top + 2.0 * cell + 20.0,
                ext.name().to_uppercase()
            )
            .unwrap();
        }
        for (i, rec) in UserModel::ALL.iter().enumerate() {
            if p == 0 {
                writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="end">{} rec.</text>"#,
                    left - 8.0,
                    top + (i as f64 + 0.5) * cell + 4.0,
                    rec.name().to_uppercase()
                )
                .unwrap();
            }
            for (j, ext) in UserModel::ALL.iter().enumerate() {
                let (_, _, _, a) = entries
                    .iter()
                    .find(|(mt, r, e, _)| mt == metric && r == rec && e == ext)
                    .expect("entry present");
                let v: f64 = a.parse().unwrap_or(0.0);
                let (fill, ink) = shade(v);
                let x = x0 + j as f64 * cell;
                let y = top + i as f64 * cell;
                writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#444444"/>"##
                )
                .unwrap();
                writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{a}</text>"#,
                    x + cell / 2.0,
                    y + cell / 2.0 + 5.0
                )
                .unwrap();
            }
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `heatmap.svg` and `heatmap.csv` into `dir`.
pub fn emit_heatmap(m: &CrossMatrix, dir: &Path, provenance: &Provenance) -> Result<()> {
    let svg = heatmap_svg(m, provenance)?;
    let csv = heatmap_csv(m, provenance)?;
    fs::write(dir.join("heatmap.svg"), svg)?;
    fs::write(dir.join("heatmap.csv"), csv)?;
    Ok(())
}
