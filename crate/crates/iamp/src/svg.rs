//! Top-down drawing of a grid snapshot: lanelet bounds, occupancy cells
//! shaded by mass summed over vehicles and steps, recorded futures.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use iamp_core::geometry::Point2;
use iamp_core::map::LaneletMap;

use crate::error::{Error, Result};
use crate::run::Snapshot;

const MARGIN: f64 = 5.0;
const SCALE: f64 = 6.0;

pub fn render_svg(map: &LaneletMap, snap: &Snapshot) -> String {
    let mut pts: Vec<Point2> = Vec::new();
    for l in map.lanelets() {
        pts.extend_from_slice(l.left_bound.points());
        pts.extend_from_slice(l.right_bound.points());
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in &pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    if !x0.is_finite() {
        (x0, y0, x1, y1) = (0.0, 0.0, 1.0, 1.0);
    }
    let (x0, y0, x1, y1) = (x0 - MARGIN, y0 - MARGIN, x1 + MARGIN, y1 + MARGIN);
    // y grows upwards in the map and downwards in SVG
    let px = |p: Point2| ((p.x - x0) * SCALE, (y1 - p.y) * SCALE);
    let (w, h) = ((x1 - x0) * SCALE, (y1 - y0) * SCALE);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for l in map.lanelets() {
        for b in [&l.left_bound, &l.right_bound] {
            let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#888" stroke-width="1"/>"##, path(b.points(), &px));
        }
    }

    let mut cells: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    for g in &snap.grid {
        *cells.entry((g.cell_x, g.cell_y)).or_default() += g.mass;
    }
    let peak = cells.values().copied().fold(0.0, f64::max);
    let r = snap.resolution;
    for (&(cx, cy), &m) in &cells {
        let (x, y) = px(Point2::new(cx as f64 * r, (cy + 1) as f64 * r));
        let alpha = if peak > 0.0 { (m / peak).sqrt() } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{d:.2}" height="{d:.2}" fill="rgb(200,30,30)" fill-opacity="{alpha:.3}"/>"#,
            d = r * SCALE
        );
    }

    for (id, now, future) in &snap.truth {
        let mut line = vec![*now];
        line.extend_from_slice(future);
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="rgb(20,60,200)" stroke-width="2" stroke-dasharray="6 3"/>"#,
            path(&line, &px)
        );
        let (x, y) = px(*now);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="rgb(20,60,200)"/>"#);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="14" font-family="sans-serif">{id}</text>"#, x + 7.0, y - 7.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="8" y="20" font-size="14" font-family="sans-serif">recording {} t = {:.1} s</text>"#,
        snap.recording_id, snap.t
    );
    s.push_str("</svg>\n");
    s
}

fn path(points: &[Point2], px: &impl Fn(Point2) -> (f64, f64)) -> String {
    points
        .iter()
        .map(|p| {
            let (x, y) = px(*p);
            format!("{x:.2},{y:.2}")
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_svg(path: &Path, map: &LaneletMap, snap: &Snapshot) -> Result<()> {
    fs::write(path, render_svg(map, snap)).map_err(|e| Error::io(path, e))
}
