//! Small dense linear-algebra helpers shared by the fitters and the
//! Langevin propagator. Everything here works on tiny (n ≤ 12) matrices
//! stored row-major in `Vec<f64>`.

/// Row-major square matrix of fixed small dimension.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    pub n: usize,
    pub a: Vec<f64>,
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        Mat { n, a: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += aik * rhs[(k, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Mat {
        Mat { n: self.n, a: self.a.iter().map(|v| v * s).collect() }
    }

    pub fn add(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.n, rhs.n);
        Mat { n: self.n, a: self.a.iter().zip(&rhs.a).map(|(x, y)| x + y).collect() }
    }

    pub fn transpose(&self) -> Mat {
        let n = self.n;
        let mut out = Mat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl std::ops::Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.a[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.a[i * self.n + j]
    }
}

/// Matrix exponential by scaling-and-squaring with a Taylor series.
/// Adequate for the small, small-norm generators used here.
pub(crate) fn expm(m: &Mat) -> Mat {
    let mut scale_pow = 0u32;
    let mut norm = m.max_abs() * m.n as f64;
    while norm > 0.25 {
        norm *= 0.5;
        scale_pow += 1;
    }
    let ms = m.scale(0.5f64.powi(scale_pow as i32));
    let mut result = Mat::identity(m.n);
    let mut term = Mat::identity(m.n);
    for k in 1..=20 {
        term = term.matmul(&ms).scale(1.0 / k as f64);
        result = result.add(&term);
        if term.max_abs() < 1e-300 {
            break;
        }
    }
    for _ in 0..scale_pow {
        result = result.matmul(&result);
    }
    result
}

/// Cholesky factor of a positive semidefinite matrix, clamping
/// rounding-level negative pivots to zero (rank-deficient inputs produce
/// zero columns).
pub(crate) fn cholesky_psd(m: &Mat) -> Mat {
    let n = m.n;
    let scale = m.max_abs().max(1e-300);
    let tol = 1e-12 * scale;
    let mut l = Mat::zeros(n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= tol {
            // dependent direction: leave the column zero
            continue;
        }
        let dj = d.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / dj;
        }
    }
    l
}

/// Solve A x = b in place by Gaussian elimination with partial pivoting.
/// Returns None for a numerically singular system.
pub(crate) fn solve_dense(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.n;
    assert_eq!(b.len(), n);
    let mut m = a.clone();
    let mut x: Vec<f64> = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        let mut best = m[(col, col)].abs();
        for r in (col + 1)..n {
            let v = m[(r, col)].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..n {
                let tmp = m[(col, j)];
                m[(col, j)] = m[(piv, j)];
                m[(piv, j)] = tmp;
            }
            x.swap(col, piv);
        }
        let d = m[(col, col)];
        for r in (col + 1)..n {
            let f = m[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                let v = m[(col, j)];
                m[(r, j)] -= f * v;
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for j in (col + 1)..n {
            s -= m[(col, j)] * x[j];
        }
        x[col] = s / m[(col, col)];
    }
    Some(x)
}

/// Inverse via column-by-column solves; None when singular.
pub(crate) fn invert(a: &Mat) -> Option<Mat> {
    let n = a.n;
    let mut out = Mat::zeros(n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = solve_dense(a, &e)?;
        for i in 0..n {
            out[(i, j)] = col[i];
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn expm_matches_scalar_and_rotation() {
        let mut m = Mat::zeros(1);
        m[(0, 0)] = -1.3;
        assert_relative_eq!(expm(&m)[(0, 0)], (-1.3f64).exp(), max_relative = 1e-14);

        // rotation generator [[0, w], [-w, 0]] → cos/sin
        let w = 2.7;
        let mut m = Mat::zeros(2);
        m[(0, 1)] = w;
        m[(1, 0)] = -w;
        let e = expm(&m);
        assert_relative_eq!(e[(0, 0)], w.cos(), max_relative = 1e-13);
        assert_relative_eq!(e[(0, 1)], w.sin(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 0)], -w.sin(), max_relative = 1e-13);
    }

    #[test]
    fn cholesky_roundtrip_and_rank_deficiency() {
        // full-rank 3x3
        let l_true = {
            let mut l = Mat::zeros(3);
            l[(0, 0)] = 2.0;
            l[(1, 0)] = 0.5;
            l[(1, 1)] = 1.5;
            l[(2, 0)] = -0.3;
            l[(2, 1)] = 0.7;
            l[(2, 2)] = 0.9;
            l
        };
        let m = l_true.matmul(&l_true.transpose());
        let l = cholesky_psd(&m);
        let back = l.matmul(&l.transpose());
        for i in 0..9 {
            assert_relative_eq!(back.a[i], m.a[i], max_relative = 1e-12);
        }

        // rank-1 2x2
        let mut m = Mat::zeros(2);
        m[(0, 0)] = 1.0;
        m[(0, 1)] = 1.0;
        m[(1, 0)] = 1.0;
        m[(1, 1)] = 1.0;
        let l = cholesky_psd(&m);
        let back = l.matmul(&l.transpose());
        for i in 0..4 {
            assert_relative_eq!(back.a[i], m.a[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn solve_and_invert() {
        let mut a = Mat::zeros(3);
        let vals = [[4.0, 1.0, -1.0], [1.0, 3.0, 0.5], [-1.0, 0.5, 5.0]];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = vals[i][j];
            }
        }
        let b = [1.0, -2.0, 0.5];
        let x = solve_dense(&a, &b).unwrap();
        for i in 0..3 {
            let mut r = 0.0;
            for j in 0..3 {
                r += vals[i][j] * x[j];
            }
            assert_relative_eq!(r, b[i], epsilon = 1e-12);
        }
        let inv = invert(&a).unwrap();
        let id = a.matmul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(id[(i, j)], expect, epsilon = 1e-12);
            }
        }
        // singular matrix
        let z = Mat::zeros(2);
        assert!(solve_dense(&z, &[1.0, 1.0]).is_none());
    }
}
