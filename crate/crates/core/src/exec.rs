//! Execution mode for the data-parallel inner loops.
//!
//! With the `parallel` feature the loops below run on the rayon pool; without
//! it they compile to plain sequential loops. Each output element is produced
//! by exactly one closure call with its own fixed summation order, so the two
//! modes return bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many output rows the parallel path is not worth the fork/join.
const PAR_MIN_ROWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Whether this mode actually fans out for `rows` output rows.
    pub fn fans_out(self, rows: usize) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel && rows >= PAR_MIN_ROWS
    }
}

/// Fills `out` row by row; `row_len` must divide `out.len()`.
pub fn fill_rows<F>(exec: Exec, out: &mut [f64], row_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if row_len == 0 {
        return;
    }
    let rows = out.len() / row_len;
    #[cfg(feature = "parallel")]
    if exec.fans_out(rows) {
        out.par_chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
        return;
    }
    let _ = (exec, rows);
    out.chunks_mut(row_len)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Evaluates `f(i)` for `i in 0..n`.
pub fn map_range<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.fans_out(n) {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// `y = M x` for a row-major square matrix `M` of side `x.len()`.
pub fn mat_vec(exec: Exec, matrix: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    debug_assert_eq!(matrix.len(), n * n);
    map_range(exec, n, |i| dot(&matrix[i * n..(i + 1) * n], x))
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_bitwise() {
        let n = 200;
        let m: Vec<f64> = (0..n * n).map(|k| ((k * 7919) % 1000) as f64 / 997.0).collect();
        let x: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
        let a = mat_vec(Exec::Sequential, &m, &x);
        let b = mat_vec(Exec::Parallel, &m, &x);
        assert_eq!(a, b);
    }

    #[test]
    fn fill_rows_visits_every_row() {
        let mut out = vec![0.0; 300];
        fill_rows(Exec::Parallel, &mut out, 3, |i, row| row.fill(i as f64));
        assert!(out.chunks(3).enumerate().all(|(i, r)| r.iter().all(|&v| v == i as f64)));
    }
}
