//! Row-compressed operators on the two-mode Fock space and the matrix-free
//! Lindblad generator `L(ρ) = Kρ + ρK† + Σ_k L_k ρ L_k†` with
//! `K = −iH − ½ Σ_k L_k† L_k`.
//!
//! The composite index of `|n_c, n_m⟩` is `n_c · n_mech + n_m`; density
//! matrices are dense and row-major.

use std::collections::BTreeMap;

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    pub dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseOp {
    pub fn from_entries(dim: usize, entries: BTreeMap<(usize, usize), Complex64>) -> Self {
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        for (&(r, c), &v) in &entries {
            if v == Complex64::new(0.0, 0.0) {
                continue;
            }
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { dim, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    /// `out += self · rho`.
    pub fn left_mul_add(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        for r in 0..n {
            let dst = &mut out[r * n..(r + 1) * n];
            for (k, v) in self.row(r) {
                let src = &rho[k * n..(k + 1) * n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
    }

    /// `out += rho · self†`.
    pub fn right_mul_adj_add(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        for i in 0..n {
            let src = &rho[i * n..(i + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (j, d) in dst.iter_mut().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, v) in self.row(j) {
                    acc += src[k] * v.conj();
                }
                *d += acc;
            }
        }
    }
}

/// Operator builder keyed by composite indices.
#[derive(Debug, Default)]
pub(crate) struct Builder {
    pub entries: BTreeMap<(usize, usize), Complex64>,
}

impl Builder {
    pub fn add(&mut self, r: usize, c: usize, v: Complex64) {
        *self.entries.entry((r, c)).or_default() += v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub n_cav: usize,
    pub n_mech: usize,
    pub k: SparseOp,
    pub jumps: Vec<SparseOp>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.n_cav * self.n_mech
    }

    pub fn index(&self, ic: usize, im: usize) -> usize {
        ic * self.n_mech + im
    }

    /// `out = L(rho)`, reusing `scratch` (length `dim²`).
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64]) {
        out.fill(Complex64::new(0.0, 0.0));
        self.k.left_mul_add(rho, out);
        self.k.right_mul_adj_add(rho, out);
        for l in &self.jumps {
            scratch.fill(Complex64::new(0.0, 0.0));
            l.left_mul_add(rho, scratch);
            l.right_mul_adj_add(scratch, out);
        }
    }

    /// Triplets of the superoperator acting on row-major `vec(ρ)`.
    pub fn superoperator_entries(&self) -> BTreeMap<(usize, usize), Complex64> {
        let n = self.dim();
        let mut m: BTreeMap<(usize, usize), Complex64> = BTreeMap::new();
        for (r, j, v) in self.k.entries() {
            for c in 0..n {
                *m.entry((r * n + c, j * n + c)).or_default() += v;
            }
        }
        for (c, j, v) in self.k.entries() {
            for r in 0..n {
                *m.entry((r * n + c, r * n + j)).or_default() += v.conj();
            }
        }
        for l in &self.jumps {
            let ents: Vec<_> = l.entries().collect();
            for &(r, j, u) in &ents {
                for &(c, k, w) in &ents {
                    *m.entry((r * n + c, j * n + k)).or_default() += u * w.conj();
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(dim: usize, ents: &[(usize, usize, f64, f64)]) -> SparseOp {
        let mut b = Builder::default();
        for &(r, c, re, im) in ents {
            b.add(r, c, Complex64::new(re, im));
        }
        SparseOp::from_entries(dim, b.entries)
    }

    fn dense(o: &SparseOp) -> Vec<Complex64> {
        let n = o.dim;
        let mut d = vec![Complex64::new(0.0, 0.0); n * n];
        for (r, c, v) in o.entries() {
            d[r * n + c] += v;
        }
        d
    }

    fn matmul(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    out[i * n + j] += a[i * n + k] * b[k * n + j];
                }
            }
        }
        out
    }

    fn adj(a: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = a.to_vec();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = a[j * n + i].conj();
            }
        }
        out
    }

    #[test]
    fn sparse_products_match_dense() {
        let n = 3;
        let o = op(n, &[(0, 1, 1.0, 0.5), (2, 0, -0.3, 0.0), (1, 1, 0.0, 2.0), (2, 2, 0.7, -0.1)]);
        let rho: Vec<Complex64> = (0..9).map(|i| Complex64::new(i as f64, 1.0 - i as f64 * 0.3)).collect();
        let mut got = vec![Complex64::new(0.0, 0.0); 9];
        o.left_mul_add(&rho, &mut got);
        let want = matmul(&dense(&o), &rho, n);
        assert!(got.iter().zip(&want).all(|(a, b)| (a - b).norm() < 1e-14));

        let mut got = vec![Complex64::new(0.0, 0.0); 9];
        o.right_mul_adj_add(&rho, &mut got);
        let want = matmul(&rho, &adj(&dense(&o), n), n);
        assert!(got.iter().zip(&want).all(|(a, b)| (a - b).norm() < 1e-14));
    }

    #[test]
    fn superoperator_matches_matrix_free_apply() {
        let n = 2;
        let k = op(n, &[(0, 0, -0.5, 1.0), (0, 1, 0.0, -0.2), (1, 0, 0.0, -0.2), (1, 1, 0.0, -0.3)]);
        let l = op(n, &[(0, 1, 0.8, 0.0)]);
        let g = Generator { n_cav: 1, n_mech: 2, k, jumps: vec![l] };
        let sup = g.superoperator_entries();
        for col in 0..4 {
            let mut e = vec![Complex64::new(0.0, 0.0); 4];
            e[col] = Complex64::new(1.0, 0.0);
            let mut out = vec![Complex64::new(0.0, 0.0); 4];
            let mut scratch = out.clone();
            g.apply(&e, &mut out, &mut scratch);
            for row in 0..4 {
                let s = sup.get(&(row, col)).copied().unwrap_or_default();
                assert!((s - out[row]).norm() < 1e-14);
            }
        }
    }
}
