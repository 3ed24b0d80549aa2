//! Deterministic SVG rendering of forests and coupled pairs.
//!
//! Drawing convention: the hyperplane coordinate runs horizontally, the
//! first coordinate vertically (upwards). Every site glyph carries
//! `class="site"` and `data-site`, every edge `class="edge"` and
//! `data-edge`, so figures can be audited element by element.

use std::collections::BTreeSet;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coupling::DiscrepancyReport;
use crate::engine::Aggregate;
use crate::lattice::Site;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FigureError {
    #[error("figures support d = 2 (and d = 3 as projected cubes for forests), got d = {0}")]
    UnsupportedDimension(usize),
}

pub const GREEN: &str = "#2ca02c";
pub const BLUE: &str = "#1f77b4";
pub const RED: &str = "#d62728";
pub const COMMON: &str = "#b0b0b0";
pub const OTHER_EDGE: &str = "#555555";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureStyle {
    /// Pixels per lattice unit.
    pub cell: u32,
    pub legend: bool,
}

impl Default for FigureStyle {
    fn default() -> Self {
        FigureStyle { cell: 12, legend: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteGlyph {
    pub site: Site,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeGlyph {
    pub from: Site,
    pub to: Site,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureScene {
    pub dim: usize,
    pub title: String,
    pub sites: Vec<SiteGlyph>,
    pub edges: Vec<EdgeGlyph>,
    pub legend: Vec<(String, String)>,
}

/// Colour of the tree rooted at `root`, hashed from its coordinates.
pub fn tree_color(root: &Site) -> String {
    let mut h = Sha256::new();
    for c in root.coords() {
        h.update(c.to_le_bytes());
    }
    let d = h.finalize();
    let hue = u16::from_le_bytes([d[0], d[1]]) as u32 % 360;
    let light = 38 + d[2] as u32 % 20;
    format!("hsl({hue},70%,{light}%)")
}

/// One colour per tree; edges take the colour of their tree.
pub fn forest_scene(agg: &Aggregate, title: &str) -> Result<FigureScene, FigureError> {
    let dim = agg.dim();
    if dim != 2 && dim != 3 {
        return Err(FigureError::UnsupportedDimension(dim));
    }
    let forest = agg.forest();
    let mut sites = Vec::with_capacity(agg.len());
    let mut edges = Vec::new();
    let mut roots = BTreeSet::new();
    for ins in agg.insertions() {
        let root = forest.root_of(&ins.site).unwrap_or(ins.site);
        roots.insert(root);
        let color = tree_color(&root);
        if dim == 2 {
            if let Some(p) = ins.parent {
                edges.push(EdgeGlyph {
                    from: p,
                    to: ins.site,
                    color: color.clone(),
                });
            }
        }
        sites.push(SiteGlyph { site: ins.site, color });
    }
    let legend = if roots.len() <= 12 {
        roots
            .iter()
            .map(|r| (format!("tree of {r}"), tree_color(r)))
            .collect()
    } else {
        vec![(format!("{} trees, colour hashed from the root", roots.len()), "#000000".into())]
    };
    Ok(FigureScene {
        dim,
        title: title.to_string(),
        sites,
        edges,
        legend,
    })
}

/// Colour code of a coupled pair: red for sites of the larger aggregate only,
/// blue for common sites with a differing particle or entry edge, green for
/// edges common to both forests.
pub fn coupling_scene(
    small: &Aggregate,
    large: &Aggregate,
    report: &DiscrepancyReport,
    title: &str,
) -> Result<FigureScene, FigureError> {
    if large.dim() != 2 {
        return Err(FigureError::UnsupportedDimension(large.dim()));
    }
    let mut sites = Vec::with_capacity(large.len());
    let mut edges = Vec::new();
    for ins in large.insertions() {
        let s = ins.site;
        let color = if report.red.contains(&s) {
            RED
        } else if report.blue.contains(&s) {
            BLUE
        } else {
            debug_assert!(small.contains(&s));
            COMMON
        };
        sites.push(SiteGlyph {
            site: s,
            color: color.into(),
        });
        if let Some(p) = ins.parent {
            let color = if report.green_edges.contains(&(p, s)) { GREEN } else { OTHER_EDGE };
            edges.push(EdgeGlyph {
                from: p,
                to: s,
                color: color.into(),
            });
        }
    }
    let legend = vec![
        ("edge common to both forests".into(), GREEN.into()),
        ("edge of the larger forest only".into(), OTHER_EDGE.into()),
        ("common site, same particle and edge".into(), COMMON.into()),
        ("common site, different particle or edge".into(), BLUE.into()),
        ("site of the larger aggregate only".into(), RED.into()),
    ];
    Ok(FigureScene {
        dim: 2,
        title: title.to_string(),
        sites,
        edges,
        legend,
    })
}

fn plane(s: &Site) -> (f64, f64) {
    // horizontal: hyperplane coordinate; vertical: first coordinate;
    // a third coordinate shifts the cube diagonally
    let depth = if s.dim() == 3 { s.coord(2) as f64 * 0.4 } else { 0.0 };
    (s.coord(1) as f64 + depth, s.coord(0) as f64 + depth)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn coords(s: &Site) -> String {
    s.coords().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

/// SVG 1.1 document for a scene; the same scene always gives the same bytes.
pub fn render_svg(scene: &FigureScene, style: &FigureStyle) -> String {
    let pts: Vec<(f64, f64)> = scene.sites.iter().map(|g| plane(&g.site)).collect();
    let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
        pts.iter().map(pick).fold(init, f)
    };
    let (x0, x1) = (fold(f64::min, -1.0, |p| p.0) - 1.0, fold(f64::max, 1.0, |p| p.0) + 1.0);
    let (y0, y1) = (fold(f64::min, -1.0, |p| p.1) - 1.0, fold(f64::max, 1.0, |p| p.1) + 1.0);
    let c = style.cell as f64;
    let legend_h = if style.legend { 18.0 * scene.legend.len() as f64 + 10.0 } else { 0.0 };
    let title_h = 24.0;
    let w = ((x1 - x0) * c).max(260.0);
    let plot_h = (y1 - y0) * c;
    let h = title_h + plot_h + legend_h;
    let px = |x: f64| (x - x0) * c;
    let py = |y: f64| title_h + (y1 - y) * c;

    let mut o = String::new();
    let _ = writeln!(o, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(o, r#"<rect class="background" x="0" y="0" width="{w:.1}" height="{h:.1}" fill="white"/>"#);
    let _ = writeln!(
        o,
        r#"<text class="title" x="6" y="16" font-family="sans-serif" font-size="13">{}</text>"#,
        esc(&scene.title)
    );
    // axes through the origin: hyperplane H horizontal, first coordinate vertical
    let _ = writeln!(
        o,
        r##"<line class="axis" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#dddddd" stroke-width="1"/>"##,
        px(x0), py(0.0), px(x1), py(0.0)
    );
    let _ = writeln!(
        o,
        r##"<line class="axis" x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#dddddd" stroke-width="1"/>"##,
        px(0.0), py(y0), px(0.0), py(y1)
    );
    let size = c * 0.7;
    for g in &scene.sites {
        let (x, y) = plane(&g.site);
        let _ = writeln!(
            o,
            r#"<rect class="site" data-site="{}" x="{:.2}" y="{:.2}" width="{size:.2}" height="{size:.2}" fill="{}"/>"#,
            coords(&g.site),
            px(x) - size / 2.0,
            py(y) - size / 2.0,
            g.color
        );
    }
    for e in &scene.edges {
        let (a, b) = (plane(&e.from), plane(&e.to));
        let _ = writeln!(
            o,
            r#"<line class="edge" data-edge="{};{}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="{:.2}"/>"#,
            coords(&e.from),
            coords(&e.to),
            px(a.0),
            py(a.1),
            px(b.0),
            py(b.1),
            e.color,
            (c * 0.15).max(1.0)
        );
    }
    if style.legend {
        let top = title_h + plot_h + 6.0;
        for (i, (label, color)) in scene.legend.iter().enumerate() {
            let y = top + 18.0 * i as f64;
            let _ = writeln!(
                o,
                r#"<rect class="legend" x="6" y="{y:.1}" width="12" height="12" fill="{color}"/>"#
            );
            let _ = writeln!(
                o,
                r#"<text class="legend" x="24" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
                y + 10.0,
                esc(label)
            );
        }
    }
    o.push_str("</svg>\n");
    o
}

/// Forest figure of an aggregate.
pub fn emit_figure(agg: &Aggregate, title: &str, style: &FigureStyle) -> Result<String, FigureError> {
    Ok(render_svg(&forest_scene(agg, title)?, style))
}

/// Colour-coded figure of a coupled pair.
pub fn emit_coupling_figure(
    small: &Aggregate,
    large: &Aggregate,
    report: &DiscrepancyReport,
    title: &str,
    style: &FigureStyle,
) -> Result<String, FigureError> {
    Ok(render_svg(&coupling_scene(small, large, report, title)?, style))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Emission, Insertion};
    use crate::lattice::Source;

    fn site(c: &[i32]) -> Site {
        Site::new(c).unwrap()
    }

    fn count(svg: &str, class: &str) -> usize {
        svg.matches(&format!(r#"class="{class}""#)).count()
    }

    #[test]
    fn empty_aggregate_gives_axes_only() {
        let svg = emit_figure(&Aggregate::new(2), "empty", &FigureStyle::default()).unwrap();
        assert!(svg.starts_with("<?xml"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(count(&svg, "axis"), 2);
        assert_eq!(count(&svg, "site"), 0);
    }

    #[test]
    fn two_sites_one_edge() {
        let z = Source::from_hyperplane(&[0]).unwrap();
        let e = |j| Emission {
            source: z,
            time: j as f64,
            index: j,
        };
        let agg = Aggregate::from_insertions(
            2,
            [
                Insertion {
                    site: site(&[0, 0]),
                    emission: e(1),
                    parent: None,
                    steps: 0,
                },
                Insertion {
                    site: site(&[1, 0]),
                    emission: e(2),
                    parent: Some(site(&[0, 0])),
                    steps: 1,
                },
            ],
        );
        let svg = emit_figure(&agg, "pair", &FigureStyle::default()).unwrap();
        assert_eq!(count(&svg, "site"), 2);
        assert_eq!(count(&svg, "edge"), 1);
        assert_eq!(svg, emit_figure(&agg, "pair", &FigureStyle::default()).unwrap());
    }

    #[test]
    fn dimension_four_is_rejected() {
        assert_eq!(
            emit_figure(&Aggregate::new(4), "", &FigureStyle::default()),
            Err(FigureError::UnsupportedDimension(4))
        );
    }

    #[test]
    fn tree_colours_are_stable() {
        assert_eq!(tree_color(&site(&[0, 3])), tree_color(&site(&[0, 3])));
        assert_ne!(tree_color(&site(&[0, 3])), tree_color(&site(&[0, 4])));
    }

    #[test]
    fn coupling_colours_follow_the_report() {
        use crate::coupling::{classify_discrepancies, run_natural_coupling};
        use crate::engine::DEFAULT_STEP_BUDGET;
        let run = run_natural_coupling(31, 2, 4, 8, 4.0, DEFAULT_STEP_BUDGET).unwrap();
        let (a, b) = (&run.ladder.states[0], &run.ladder.states[1]);
        let rep = classify_discrepancies(a, b).unwrap();
        assert!(!rep.red.is_empty());
        let scene = coupling_scene(a, b, &rep, "c").unwrap();
        for g in &scene.sites {
            let want = if rep.red.contains(&g.site) {
                RED
            } else if rep.blue.contains(&g.site) {
                BLUE
            } else {
                COMMON
            };
            assert_eq!(g.color, want, "{}", g.site);
        }
        let green = scene.edges.iter().filter(|e| e.color == GREEN).count();
        assert_eq!(green, rep.green_edges.len());
        let svg = render_svg(&scene, &FigureStyle::default());
        assert_eq!(svg.matches(RED).count(), rep.red.len() + 1);
    }
}
