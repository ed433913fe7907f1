//! Pool-adjacent-violators fits.

/// Least-squares non-decreasing fit of `values` with positive `weights`.
pub fn fit_non_decreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len());
    // blocks of (mean, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            let w = w1 + w2;
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * w1 + m2 * w2) / w, w, c1 + c2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, c)| std::iter::repeat_n(m, c))
        .collect()
}

pub fn fit_non_increasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    fit_non_decreasing(&neg, weights).into_iter().map(|v| -v).collect()
}

/// Fits a grid `rows x cols` to be non-increasing along both axes: each row
/// first, then each column. Isotonic regression is order preserving, so the
/// column pass keeps the rows monotone.
pub fn fit_grid_non_increasing(grid: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = grid
        .iter()
        .map(|row| fit_non_increasing(row, &vec![1.0; row.len()]))
        .collect();
    let rows = out.len();
    if rows == 0 {
        return out;
    }
    for c in 0..out[0].len() {
        let column: Vec<f64> = out.iter().map(|r| r[c]).collect();
        let fitted = fit_non_increasing(&column, &vec![1.0; rows]);
        for (r, v) in fitted.into_iter().enumerate() {
            out[r][c] = v;
        }
    }
    out
}
