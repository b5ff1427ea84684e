//! Visual artifacts: confusion-matrix heatmaps and explanation overlays.

use signbench_core::explain::{Explanation, PatchGrid};
use signbench_core::{Image, Mask};

use crate::error::{BenchError, Result};

pub fn confusion_to_csv(confusion: &[Vec<u64>]) -> String {
    let mut out = String::new();
    for row in confusion {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Row-normalized grayscale rendering: each row scales so its maximum is
/// white; an all-zero row stays black.
pub fn confusion_heatmap(confusion: &[Vec<u64>]) -> Result<Mask> {
    let rows = confusion.len();
    let cols = confusion.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 || confusion.iter().any(|r| r.len() != cols) {
        return Err(BenchError::Config("confusion matrix must be rectangular and nonempty".into()));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for row in confusion {
        let max = *row.iter().max().expect("row is nonempty");
        for &count in row {
            let level = if max == 0 {
                0
            } else {
                (count as f64 / max as f64 * 255.0).round() as u8
            };
            data.push(level);
        }
    }
    Ok(Mask::new(cols as u32, rows as u32, data)?)
}

/// Red tint over the strongest patches, opacity proportional to each
/// patch's share of the top weight. Negative-weight patches are skipped:
/// the overlay shows what argues *for* the class.
pub fn explanation_overlay(
    img: &Image,
    grid: &PatchGrid,
    explanation: &Explanation,
    top: usize,
) -> Result<Image> {
    let picks: Vec<usize> = explanation
        .top_k
        .iter()
        .take(top)
        .copied()
        .filter(|&i| explanation.patch_weights[i] > 0.0)
        .collect();
    let mut out = img.clone();
    let Some(&lead) = picks.first() else { return Ok(out) };
    let w_max = explanation.patch_weights[lead];

    for &index in &picks {
        let t = 0.6 * explanation.patch_weights[index] / w_max;
        let bx = grid.patch_box(index);
        for y in bx.y0..bx.y1 {
            for x in bx.x0..bx.x1 {
                let [r, g, b] = out.pixel(x, y);
                out.set_pixel(
                    x,
                    y,
                    [
                        (r as f64 + (255.0 - r as f64) * t).round() as u8,
                        (g as f64 * (1.0 - t)).round() as u8,
                        (b as f64 * (1.0 - t)).round() as u8,
                    ],
                );
            }
        }
    }
    Ok(out)
}
