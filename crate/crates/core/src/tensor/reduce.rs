use crate::error::{Error, Result};

/// Elementwise maximum over a non-empty set of equal-length rows.
///
/// The result does not depend on row order. Signed zeros are normalised to
/// `+0.0` so it is bit-identical under permutation as well.
pub fn max_reduce<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<f64>> {
    let first = rows
        .first()
        .ok_or(Error::EmptyInput("max_reduce over no rows"))?;
    let mut acc = first.as_ref().to_vec();
    for row in &rows[1..] {
        let row = row.as_ref();
        if row.len() != acc.len() {
            return Err(Error::shape(format!(
                "max_reduce rows of length {} and {}",
                acc.len(),
                row.len()
            )));
        }
        for (a, &v) in acc.iter_mut().zip(row) {
            if v > *a {
                *a = v;
            }
        }
    }
    acc.iter_mut().for_each(|v| *v += 0.0);
    Ok(acc)
}

/// For every column, the index of the first row attaining the maximum.
pub fn argmax_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Vec<usize>> {
    let first = rows
        .first()
        .ok_or(Error::EmptyInput("argmax over no rows"))?;
    let mut best = first.as_ref().to_vec();
    let mut idx = vec![0; best.len()];
    for (r, row) in rows.iter().enumerate().skip(1) {
        let row = row.as_ref();
        if row.len() != best.len() {
            return Err(Error::shape("argmax rows of unequal length"));
        }
        for c in 0..best.len() {
            if row[c] > best[c] {
                best[c] = row[c];
                idx[c] = r;
            }
        }
    }
    Ok(idx)
}
