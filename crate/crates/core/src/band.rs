//! Banded linear algebra for the regular strip mesh.
//!
//! Column-major node numbering keeps the assembled tangent, mass, and
//! Newmark effective matrices inside a narrow band, so factorizations cost
//! O(n b^2) instead of O(n^3). Two factorizations are provided:
//!
//! - [`BandLu`]: LU with partial pivoting (LAPACK band layout with fill
//!   rows), used for Newton updates and shift-invert solves. Stable for the
//!   indefinite tangents that appear near critical points.
//! - [`ldlt_inertia`]: unpivoted symmetric elimination that only reports the
//!   pivot signs. By Sylvester's law of inertia the negative-pivot count of
//!   K - sigma I equals the number of eigenvalues below sigma, which drives
//!   the bisection in the smallest-eigenvalue solver.

use crate::error::{Error, Result};

/// General band matrix, column-major LAPACK-style storage:
/// entry (i, j) with -kl <= i - j <= ku lives at `data[j * ld + ku + i - j]`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            data: vec![0.0; ld * n],
        }
    }

    #[inline]
    fn ld(&self) -> usize {
        self.kl + self.ku + 1
    }

    #[inline]
    pub fn in_band(&self, i: usize, j: usize) -> bool {
        let (i, j) = (i as isize, j as isize);
        i - j <= self.kl as isize && j - i <= self.ku as isize
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[j * self.ld() + (self.ku + i) - j]
        } else {
            0.0
        }
    }

    /// Accumulate into (i, j). Panics if the entry is outside the band.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(self.in_band(i, j), "({i},{j}) outside band kl={} ku={}", self.kl, self.ku);
        let ld = self.ld();
        self.data[j * ld + (self.ku + i) - j] += v;
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(self.in_band(i, j));
        let ld = self.ld();
        self.data[j * ld + (self.ku + i) - j] = v;
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = 0.0);
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let ld = self.ld();
            for i in lo..=hi {
                y[i] += self.data[j * ld + (self.ku + i) - j] * xj;
            }
        }
    }

    /// Infinity norm (max absolute row sum).
    pub fn inf_norm(&self) -> f64 {
        let mut rows = vec![0.0f64; self.n];
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let ld = self.ld();
            for i in lo..=hi {
                rows[i] += self.data[j * ld + (self.ku + i) - j].abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Max asymmetry |A - A^T| over the band; zero for exactly mirrored
    /// assembly.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.n {
            let hi = (j + self.kl).min(self.n - 1);
            for i in j..=hi {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Dense copy, for small oracle comparisons in tests.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for i in lo..=hi {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// A + shift * I on the diagonal, returned as a new matrix.
    pub fn shifted(&self, shift: f64) -> BandMatrix {
        let mut out = self.clone();
        for j in 0..self.n {
            let v = out.get(j, j) + shift;
            out.set(j, j, v);
        }
        out
    }

    /// self += s * other. Band layouts must match.
    pub fn add_scaled(&mut self, other: &BandMatrix, s: f64) {
        assert_eq!(self.n, other.n);
        assert_eq!(self.kl, other.kl);
        assert_eq!(self.ku, other.ku);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }
}

/// LU factorization of a band matrix with partial pivoting.
pub struct BandLu {
    n: usize,
    kl: usize,
    /// Working upper bandwidth after fill: kl + ku.
    kuw: usize,
    /// Factor storage, (2 kl + ku + 1) rows per column.
    ab: Vec<f64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &BandMatrix) -> Result<BandLu> {
        let n = a.n;
        let kl = a.kl;
        let kuw = a.kl + a.ku;
        let ld = kl + kuw + 1;
        let mut ab = vec![0.0f64; ld * n];
        // Band entry (i, j) sits at ab[j * ld + kl + kuw + i - j].
        let at = |i: usize, j: usize| j * ld + (kl + kuw + i) - j;
        for j in 0..n {
            let lo = j.saturating_sub(a.ku);
            let hi = (j + kl).min(n - 1);
            for i in lo..=hi {
                ab[at(i, j)] = a.get(i, j);
            }
        }

        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            // Pivot search over rows j..=j+km in column j.
            let mut jp = 0usize;
            let mut best = ab[at(j, j)].abs();
            for i in 1..=km {
                let v = ab[at(j + i, j)].abs();
                if v > best {
                    best = v;
                    jp = i;
                }
            }
            ipiv[j] = j + jp;
            let pivot = ab[at(j + jp, j)];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::LinearSolve(format!(
                    "zero or non-finite pivot at column {j}"
                )));
            }
            let hi_col = (j + kuw).min(n - 1);
            if jp != 0 {
                for c in j..=hi_col {
                    ab.swap(at(j, c), at(j + jp, c));
                }
            }
            let pivot = ab[at(j, j)];
            for i in 1..=km {
                ab[at(j + i, j)] /= pivot;
            }
            for c in (j + 1)..=hi_col {
                let t = ab[at(j, c)];
                if t != 0.0 {
                    for i in 1..=km {
                        ab[at(j + i, c)] -= ab[at(j + i, j)] * t;
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            kuw,
            ab,
            ipiv,
        })
    }

    /// Solve A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let ld = self.kl + self.kuw + 1;
        let at = |i: usize, j: usize| j * ld + (self.kl + self.kuw + i) - j;
        for j in 0..self.n {
            if self.ipiv[j] != j {
                b.swap(j, self.ipiv[j]);
            }
            let km = self.kl.min(self.n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                for i in 1..=km {
                    b[j + i] -= self.ab[at(j + i, j)] * bj;
                }
            }
        }
        for j in (0..self.n).rev() {
            b[j] /= self.ab[at(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                let lo = j.saturating_sub(self.kuw);
                for i in lo..j {
                    b[i] -= self.ab[at(i, j)] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Outcome of the unpivoted symmetric elimination of A - shift I.
pub struct Inertia {
    /// Number of negative pivots = number of eigenvalues below the shift.
    pub negatives: usize,
}

/// Count eigenvalues of the symmetric band matrix below `shift` via the
/// pivot signs of an unpivoted LDL^T sweep. Fails with a zero-pivot error
/// when the shift is (numerically) an eigenvalue; callers perturb the shift
/// and retry.
pub fn ldlt_inertia(a: &BandMatrix, shift: f64, pivot_floor: f64) -> Result<Inertia> {
    let n = a.n;
    let hb = a.kl.max(a.ku);
    let ld = hb + 1;
    // Lower-triangle band copy of A - shift I.
    let mut w = vec![0.0f64; ld * n];
    for j in 0..n {
        let hi = (j + hb).min(n - 1);
        for i in j..=hi {
            let mut v = a.get(i, j);
            if i == j {
                v -= shift;
            }
            w[j * ld + (i - j)] = v;
        }
    }
    let mut negatives = 0usize;
    for j in 0..n {
        let d = w[j * ld];
        if !d.is_finite() || d.abs() <= pivot_floor {
            return Err(Error::LinearSolve(format!(
                "ldlt pivot underflow at column {j}: {d:.3e}"
            )));
        }
        if d < 0.0 {
            negatives += 1;
        }
        let hi = (j + hb).min(n - 1);
        for c in (j + 1)..=hi {
            let f = w[j * ld + (c - j)] / d;
            if f != 0.0 {
                for r in c..=hi {
                    w[c * ld + (r - c)] -= w[j * ld + (r - j)] * f;
                }
            }
        }
    }
    Ok(Inertia { negatives })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(rng: &mut ChaCha8Rng, n: usize, kl: usize, ku: usize) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, kl, ku);
        for j in 0..n {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl).min(n - 1);
            for i in lo..=hi {
                a.set(i, j, rng.gen_range(-1.0..1.0));
            }
            let d = a.get(j, j) + if rng.gen_bool(0.5) { 4.0 } else { -4.0 };
            a.set(j, j, d);
        }
        a
    }

    fn random_sym_band(rng: &mut ChaCha8Rng, n: usize, hb: usize) -> BandMatrix {
        let mut a = BandMatrix::zeros(n, hb, hb);
        for j in 0..n {
            for i in j..=(j + hb).min(n - 1) {
                let v = rng.gen_range(-1.0..1.0);
                a.set(i, j, v);
                if i != j {
                    a.set(j, i, v);
                }
            }
        }
        a
    }

    #[test]
    fn lu_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(n, kl, ku) in &[(1usize, 0usize, 0usize), (5, 1, 2), (40, 3, 3), (80, 7, 5)] {
            let a = random_band(&mut rng, n, kl, ku);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lu = BandLu::factor(&a).unwrap();
            let x = lu.solve(&b);
            let dense = a.to_dense();
            let xd = dense
                .clone()
                .lu()
                .solve(&nalgebra::DVector::from_vec(b.clone()))
                .unwrap();
            for i in 0..n {
                assert!(
                    (x[i] - xd[i]).abs() < 1e-9 * (1.0 + xd[i].abs()),
                    "n={n} i={i}: {} vs {}",
                    x[i],
                    xd[i]
                );
            }
        }
    }

    #[test]
    fn lu_handles_indefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let mut a = random_sym_band(&mut rng, n, 4);
        for j in 0..n {
            let sign = if j % 3 == 0 { -1.0 } else { 1.0 };
            a.set(j, j, sign * (3.0 + j as f64 * 0.01));
        }
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let lu = BandLu::factor(&a).unwrap();
        let x = lu.solve(&b);
        let mut r = vec![0.0; n];
        a.matvec(&x, &mut r);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-9, "residual {} at {i}", r[i] - b[i]);
        }
    }

    #[test]
    fn matvec_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_band(&mut rng, 30, 2, 4);
        let x: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut y = vec![0.0; 30];
        a.matvec(&x, &mut y);
        let yd = a.to_dense() * nalgebra::DVector::from_vec(x);
        for i in 0..30 {
            assert!((y[i] - yd[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn inertia_matches_dense_eigencount() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let n = 35;
            let a = random_sym_band(&mut rng, n, 3);
            let dense = a.to_dense();
            let eigs = DMatrix::from(dense).symmetric_eigenvalues();
            for &shift in &[-2.0, -0.5, 0.0, 0.3, 1.5] {
                let expected = eigs.iter().filter(|&&e| e < shift).count();
                match ldlt_inertia(&a, shift, 1e-300) {
                    Ok(inertia) => assert_eq!(inertia.negatives, expected, "shift {shift}"),
                    // Shift numerically hit an eigenvalue; the caller
                    // perturbs in that case.
                    Err(_) => {}
                }
            }
        }
    }

    #[test]
    fn singular_matrix_detected() {
        let mut a = BandMatrix::zeros(3, 1, 1);
        a.set(0, 0, 1.0);
        a.set(2, 2, 1.0);
        assert!(BandLu::factor(&a).is_err());
    }
}
