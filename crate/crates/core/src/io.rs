//! Output helpers: atomic file writes and minimal SVG rendering.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::lattice::SiteCoord;

/// Writes `bytes` to a temporary sibling and renames it into place, so a
/// reader never observes a half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp: PathBuf = path.with_file_name(format!(".{file_name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

/// Renders a set of 2-D cells at scale `n` (each cell a `1/n` square) with the
/// unit diamond drawn for reference.
pub fn svg_cells(cells: &[SiteCoord], scale: u64, title: &str) -> String {
    let size = 600.0;
    let half = size / 2.0;
    // world [-1.1, 1.1] maps onto the canvas
    let k = half / 1.1;
    let cell = k / scale.max(1) as f64;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n"
    ));
    out.push_str(&format!("<title>{title}</title>\n"));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g fill=\"#3b6ea5\">\n");
    for c in cells {
        let (x, y) = (c.coord(0) as f64, c.coord(1) as f64);
        let px = half + (x - 0.5) * cell;
        let py = half - (y + 0.5) * cell;
        out.push_str(&format!(
            "<rect x=\"{px:.3}\" y=\"{py:.3}\" width=\"{cell:.3}\" height=\"{cell:.3}\"/>\n"
        ));
    }
    out.push_str("</g>\n");
    out.push_str(&diamond_outline(half, k));
    out.push_str("</svg>\n");
    out
}

/// Renders a closed polygon (world coordinates) with the unit diamond.
pub fn svg_polygon(vertices: &[[f64; 2]], title: &str) -> String {
    let size = 600.0;
    let half = size / 2.0;
    let k = half / 1.1;
    let pts: Vec<String> = vertices
        .iter()
        .map(|v| format!("{:.3},{:.3}", half + v[0] * k, half - v[1] * k))
        .collect();
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" viewBox=\"0 0 {size} {size}\">\n\
         <title>{title}</title>\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <polygon points=\"{}\" fill=\"#3b6ea5\" fill-opacity=\"0.5\" stroke=\"#3b6ea5\"/>\n{}</svg>\n",
        pts.join(" "),
        diamond_outline(half, k)
    )
}

fn diamond_outline(half: f64, k: f64) -> String {
    format!(
        "<polygon points=\"{:.3},{:.3} {:.3},{:.3} {:.3},{:.3} {:.3},{:.3}\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\"/>\n",
        half + k,
        half,
        half,
        half - k,
        half - k,
        half,
        half,
        half + k
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_creates_parents_and_leaves_no_temp() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/out.txt");
        atomic_write(&path, b"hello").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"hello");
        let names: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn svg_contains_one_rect_per_cell() {
        let cells = [SiteCoord::from(&[0, 0]), SiteCoord::from(&[1, 0])];
        let svg = svg_cells(&cells, 2, "t");
        assert_eq!(svg.matches("<rect x=").count(), 2);
        assert!(svg.contains("<polygon"));
    }
}
