//! Rendering: JSON, plain-text tables and SVG heatmaps.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimates::{component_gradient_sq, h_field, EstimateReport, Stability, Status};
use crate::flux::{norm, FluxParams};
use crate::grid::{ScalarField, SpatialGrid};

/// Pretty JSON with a trailing newline. Struct fields keep declaration
/// order and maps are `BTreeMap`s, so output is stable.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4e}"))
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::VacuousPass => "vacuous",
        Status::Violation => "VIOLATION",
    }
}

pub fn report_table(reports: &[EstimateReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:<10} {:>12} {:>12} {:>12} {:>7}",
        "estimate", "status", "constant", "lhs", "rhs", "members"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<22} {:<10} {:>12} {:>12.4e} {:>12.4e} {:>7}",
            r.id.name(),
            status_name(r.status),
            fmt_opt(r.constant),
            r.lhs,
            r.rhs,
            r.members.len()
        );
    }
    out
}

pub fn stability_table(rows: &[Stability]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:>12} {:>12} {:>9} {:>6}",
        "estimate", "coarse", "fine", "ratio", "ok"
    );
    for s in rows {
        let _ = writeln!(
            out,
            "{:<22} {:>12} {:>12} {:>9} {:>6}",
            s.id.name(),
            fmt_opt(s.coarse),
            fmt_opt(s.fine),
            s.ratio.map_or_else(|| "-".into(), |r| format!("{r:.3}")),
            if s.pass { "yes" } else { "NO" }
        );
    }
    out
}

/// Pointwise fields worth looking at for one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// `|Du|`.
    pub grad_norm: Vec<f64>,
    /// `(|Du| − ν)_+`.
    pub excess: Vec<f64>,
    /// `|D H_{p/2}(Du)|`.
    pub dh_norm: Vec<f64>,
}

pub fn diagnostics(u: &ScalarField, params: &FluxParams, level: usize) -> Diagnostics {
    let space = u.grid().space();
    let dim = space.dim();
    let mut g = vec![0.0; space.node_count() * dim];
    crate::calculus::gradient_into(space, u.slice(level), &mut g);
    let grad_norm: Vec<f64> = g.chunks(dim).map(norm).collect();
    let excess = grad_norm.iter().map(|r| (r - params.nu).max(0.0)).collect();
    let dh_norm = component_gradient_sq(space, &h_field(&g, dim, params.p / 2.0, params.nu))
        .into_iter()
        .map(f64::sqrt)
        .collect();
    Diagnostics { grad_norm, excess, dh_norm }
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;

/// Blue through green to yellow.
fn color(s: f64) -> String {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let s = if s.is_finite() { s.clamp(0.0, 1.0) } else { 0.0 };
    let x = s * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    let c: Vec<u8> = (0..3)
        .map(|k| (STOPS[i][k] + f * (STOPS[i + 1][k] - STOPS[i][k])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 0.0)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmap of one nodal slice; a polyline in one dimension.
pub fn svg_slice(space: &SpatialGrid, values: &[f64], title: &str) -> Result<String> {
    if values.len() != space.node_count() {
        return Err(Error::Format(format!(
            "slice has {} values, grid has {} nodes",
            values.len(),
            space.node_count()
        )));
    }
    let (lo, hi) = range(values);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let width = SIZE + 2.0 * MARGIN + 60.0;
    let height = SIZE + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="14">{}</text>"#,
        MARGIN * 0.6,
        escape(title)
    );
    match space.dim() {
        1 => {
            let n = values.len();
            let pts: Vec<String> = values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x = MARGIN + SIZE * i as f64 / (n - 1) as f64;
                    let y = MARGIN + SIZE * (1.0 - (v - lo) / span);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
            );
            let _ = writeln!(
                s,
                r##"<polyline fill="none" stroke="#3b528b" stroke-width="1.5" points="{}"/>"##,
                pts.join(" ")
            );
        }
        2 => {
            let nx = space.nodes_on(0);
            let ny = space.nodes_on(1);
            let cell = SIZE / nx.max(ny) as f64;
            for (k, v) in values.iter().enumerate() {
                let [i, j] = space.multi_index(k);
                let x = MARGIN + cell * i as f64;
                let y = MARGIN + cell * (ny - 1 - j) as f64;
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{w:.2}" fill="{}"/>"#,
                    color((v - lo) / span),
                    w = cell + 0.05
                );
            }
        }
        d => return Err(Error::Format(format!("cannot plot dimension {d}"))),
    }
    // color bar
    let bx = MARGIN + SIZE + 15.0;
    for i in 0..64 {
        let y = MARGIN + SIZE * (1.0 - (i + 1) as f64 / 64.0);
        let _ = writeln!(
            s,
            r#"<rect x="{bx}" y="{y:.2}" width="15" height="{:.2}" fill="{}"/>"#,
            SIZE / 64.0 + 0.05,
            color((i as f64 + 0.5) / 64.0)
        );
    }
    for (v, y) in [(hi, MARGIN + 4.0), (lo, MARGIN + SIZE)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-family="sans-serif" font-size="10">{v:.3e}</text>"#,
            bx + 18.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Heatmap of one level of a field.
pub fn svg_field(field: &ScalarField, level: usize, title: &str) -> Result<String> {
    if level >= field.grid().levels() {
        return Err(Error::Format(format!("level {level} out of range")));
    }
    svg_slice(field.grid().space(), field.slice(level), title)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimates::{EstimateId, Member};
    use crate::grid::SpaceTimeGrid;
    use std::collections::BTreeMap;

    fn field() -> ScalarField {
        let g = SpaceTimeGrid::new(SpatialGrid::cube(2, 8, 0.0, 1.0).unwrap(), 0.1, 0.0, 2).unwrap();
        ScalarField::from_fn(g, |x, t| 3.0 * x[0] + x[1] * t).unwrap()
    }

    #[test]
    fn color_ends() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
        assert_eq!(color(f64::NAN), "#440154");
    }

    #[test]
    fn svg_has_one_rect_per_node() {
        let f = field();
        let svg = svg_field(&f, 1, "u <t=0.1>").unwrap();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        // nodes, background and 64 color-bar rects
        assert_eq!(svg.matches("<rect").count(), 81 + 1 + 64);
        assert!(svg.contains("u &lt;t=0.1&gt;"));
        assert!(svg_field(&f, 3, "x").is_err());
        let line = SpatialGrid::cube(1, 10, 0.0, 1.0).unwrap();
        let v: Vec<f64> = (0..11).map(|i| i as f64).collect();
        assert!(svg_slice(&line, &v, "line").unwrap().contains("<polyline"));
        assert!(svg_slice(&line, &v[..3], "short").is_err());
    }

    #[test]
    fn diagnostics_of_an_affine_field() {
        let f = field();
        let params = FluxParams::new(2.0, 1.0, 0.0).unwrap();
        let d = diagnostics(&f, &params, 0);
        assert!(d.grad_norm.iter().all(|r| (r - 3.0).abs() < 1e-12));
        assert!(d.excess.iter().all(|r| (r - 2.0).abs() < 1e-12));
        assert!(d.dh_norm.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn tables_and_json() {
        let m = Member::new(0.1, 1.0, 4.0);
        let r = EstimateReport::from_members(EstimateId::Caccioppoli, None, vec![m], BTreeMap::new());
        let t = report_table(&[r.clone()]);
        assert!(t.contains("caccioppoli") && t.contains("2.5000e-1"));
        let j = to_json(&r).unwrap();
        assert_eq!(j, to_json(&r).unwrap());
        assert!(j.ends_with("}\n"));
    }
}
