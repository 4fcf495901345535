//! Accuracy grids in the layout of the result tables: one row per
//! (manipulation, frames) pair, one column per model variant.

/// Position of one accuracy value in the grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TableCell {
    pub manipulation: String,
    pub frames: usize,
    pub variant: String,
}

impl TableCell {
    pub fn new(manipulation: impl Into<String>, frames: usize, variant: impl Into<String>) -> Self {
        Self {
            manipulation: manipulation.into(),
            frames,
            variant: variant.into(),
        }
    }
}

/// Accuracy in `[0, 1]` as a percentage with at most two decimals and no
/// trailing zeros: `0.969` → `"96.9"`.
pub fn format_percent(accuracy: f64) -> String {
    let s = format!("{:.2}", accuracy * 100.0);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Renders a Markdown grid. Rows and columns appear in the order in which
/// they first occur in `cells`; missing cells print as `-`.
pub fn report_table(cells: &[(TableCell, f64)]) -> String {
    let mut rows: Vec<(&str, usize)> = Vec::new();
    let mut cols: Vec<&str> = Vec::new();
    for (c, _) in cells {
        if !rows.contains(&(c.manipulation.as_str(), c.frames)) {
            rows.push((&c.manipulation, c.frames));
        }
        if !cols.contains(&c.variant.as_str()) {
            cols.push(&c.variant);
        }
    }
    let mut out = String::from("| Manipulation | Frames |");
    for c in &cols {
        out.push_str(&format!(" {c} |"));
    }
    out.push_str("\n|---|---|");
    for _ in &cols {
        out.push_str("---|");
    }
    out.push('\n');
    for (manip, frames) in rows {
        out.push_str(&format!("| {manip} | {frames} |"));
        for col in &cols {
            let v = cells
                .iter()
                .rev()
                .find(|(c, _)| c.manipulation == manip && c.frames == frames && c.variant == *col)
                .map(|(_, v)| format_percent(*v));
            out.push_str(&format!(" {} |", v.as_deref().unwrap_or("-")));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_format() {
        assert_eq!(format_percent(0.969), "96.9");
        assert_eq!(format_percent(0.9435), "94.35");
        assert_eq!(format_percent(1.0), "100");
        assert_eq!(format_percent(0.5), "50");
        assert_eq!(format_percent(0.12345), "12.35");
    }

    #[test]
    fn single_cell_grid() {
        let t = report_table(&[(TableCell::new("Deepfake", 5, "best"), 0.969)]);
        assert!(t.contains("| Deepfake | 5 | 96.9 |"), "{t}");
    }

    #[test]
    fn empty_is_header_only() {
        let t = report_table(&[]);
        assert_eq!(t.lines().count(), 2);
        assert!(t.starts_with("| Manipulation | Frames |"));
    }

    #[test]
    fn missing_cells_are_dashes() {
        let t = report_table(&[
            (TableCell::new("Deepfake", 1, "DenseNet"), 0.964),
            (TableCell::new("Deepfake", 5, "DenseNet + BiDir"), 0.969),
        ]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[2], "| Deepfake | 1 | 96.4 | - |");
        assert_eq!(lines[3], "| Deepfake | 5 | - | 96.9 |");
    }

    #[test]
    fn variation_table_shape() {
        // Base model against the two architectural variations.
        let rows = [
            ("Deepfake", [0.969, 0.917, 0.944]),
            ("Face2Face", [0.9435, 0.8746, 0.899]),
            ("FaceSwap", [0.963, 0.932, 0.948]),
        ];
        let mut cells = Vec::new();
        for (m, v) in rows {
            for (name, acc) in ["Base", "Spatial Transformer", "Multi Recurrence"].iter().zip(v) {
                cells.push((TableCell::new(m, 5, *name), acc));
            }
        }
        let t = report_table(&cells);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(
            lines[0],
            "| Manipulation | Frames | Base | Spatial Transformer | Multi Recurrence |"
        );
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2], "| Deepfake | 5 | 96.9 | 91.7 | 94.4 |");
        assert_eq!(lines[3], "| Face2Face | 5 | 94.35 | 87.46 | 89.9 |");
        assert_eq!(lines[4], "| FaceSwap | 5 | 96.3 | 93.2 | 94.8 |");
    }
}
