//! SVG rendering of cell assignments on a disk grid.

use std::fmt::Write as _;

use stochgeom::tessellation::{CellAssignment, Grid};

/// Fill colour for member `i`: golden-ratio hue steps, so neighbours in index
/// order get well separated colours.
pub fn palette(i: usize) -> String {
    let hue = (i as f64 * 0.618_033_988_749_895).fract() * 360.0;
    let light = [52, 64, 44][i % 3];
    format!("hsl({hue:.1},62%,{light}%)")
}

/// One square per grid point, coloured by winner, inside the unit circle.
/// `header` lines become XML comments.
pub fn render_disk(assignment: &CellAssignment, grid: &Grid, header: &[String]) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    for h in header {
        let _ = writeln!(out, "<!-- {} -->", h.replace("--", "- -"));
    }
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"-1.02 -1.02 2.04 2.04\" width=\"800\" height=\"800\">"
    );
    out.push_str("<g shape-rendering=\"crispEdges\" stroke=\"none\">\n");
    let h = grid.h;
    for (p, &w) in grid.points.iter().zip(&assignment.winners) {
        // SVG y grows downward
        let _ = writeln!(
            out,
            "<rect x=\"{:.6}\" y=\"{:.6}\" width=\"{h:.6}\" height=\"{h:.6}\" fill=\"{}\"/>",
            p[0] - h / 2.0,
            -p[1] - h / 2.0,
            palette(w)
        );
    }
    out.push_str("</g>\n");
    out.push_str("<circle cx=\"0\" cy=\"0\" r=\"1\" fill=\"none\" stroke=\"black\" stroke-width=\"0.006\"/>\n");
    out.push_str("</svg>\n");
    out
}
