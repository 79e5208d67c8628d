//! Fixed-capacity dense matrices for dimensions up to three.
//!
//! Every kernel evaluation touches a handful of d×d matrices, so these are
//! stack values rather than heap-backed `nalgebra` matrices. `nalgebra` is
//! still used where a full symmetric eigen-decomposition is required.

pub const MAX_DIM: usize = 3;

pub type Vec3 = [f64; MAX_DIM];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    pub d: usize,
    pub a: [[f64; MAX_DIM]; MAX_DIM],
}

impl Mat {
    pub fn zeros(d: usize) -> Self {
        assert!(d >= 1 && d <= MAX_DIM, "dimension {d} outside 1..=3");
        Mat { d, a: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Mat::zeros(d);
        for i in 0..d {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn diag(v: &[f64]) -> Self {
        let mut m = Mat::zeros(v.len());
        for (i, x) in v.iter().enumerate() {
            m.a[i][i] = *x;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let d = rows.len();
        if d == 0 || d > MAX_DIM || rows.iter().any(|r| r.len() != d) {
            return None;
        }
        let mut m = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.a[i][j] = rows[i][j];
            }
        }
        Some(m)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.d).map(|i| self.a[i][..self.d].to_vec()).collect()
    }

    pub fn outer(u: &[f64], v: &[f64]) -> Self {
        let mut m = Mat::zeros(u.len());
        for i in 0..u.len() {
            for j in 0..u.len() {
                m.a[i][j] = u[i] * v[j];
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn mul(&self, o: &Mat) -> Mat {
        let d = self.d;
        let mut r = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += self.a[i][k] * o.a[k][j];
                }
                r.a[i][j] = s;
            }
        }
        r
    }

    pub fn add(&self, o: &Mat) -> Mat {
        let mut r = *self;
        for i in 0..self.d {
            for j in 0..self.d {
                r.a[i][j] += o.a[i][j];
            }
        }
        r
    }

    pub fn sub(&self, o: &Mat) -> Mat {
        let mut r = *self;
        for i in 0..self.d {
            for j in 0..self.d {
                r.a[i][j] -= o.a[i][j];
            }
        }
        r
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut r = *self;
        for i in 0..self.d {
            for j in 0..self.d {
                r.a[i][j] *= s;
            }
        }
        r
    }

    pub fn transpose(&self) -> Mat {
        let mut r = *self;
        for i in 0..self.d {
            for j in 0..self.d {
                r.a[i][j] = self.a[j][i];
            }
        }
        r
    }

    #[inline]
    pub fn mat_vec(&self, v: &[f64]) -> Vec3 {
        let mut r = [0.0; MAX_DIM];
        for i in 0..self.d {
            let mut s = 0.0;
            for j in 0..self.d {
                s += self.a[i][j] * v[j];
            }
            r[i] = s;
        }
        r
    }

    /// ⟨M u, v⟩
    #[inline]
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        let mu = self.mat_vec(u);
        dot(&mu[..self.d], &v[..self.d])
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.a[i][i]).sum()
    }

    /// tr(self · o), i.e. the Frobenius pairing when either factor is symmetric.
    #[inline]
    pub fn trace_prod(&self, o: &Mat) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s += self.a[i][j] * o.a[j][i];
            }
        }
        s
    }

    pub fn frobenius(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s += self.a[i][j] * self.a[i][j];
            }
        }
        s.sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s = s.max(self.a[i][j].abs());
            }
        }
        s
    }

    /// Largest |a_ij − a_ji| relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let mut s: f64 = 0.0;
        for i in 0..self.d {
            for j in 0..i {
                s = s.max((self.a[i][j] - self.a[j][i]).abs());
            }
        }
        s / scale
    }

    pub fn cholesky(&self) -> Option<Chol> {
        let d = self.d;
        let mut l = [[0.0; MAX_DIM]; MAX_DIM];
        for j in 0..d {
            let mut s = self.a[j][j];
            for k in 0..j {
                s -= l[j][k] * l[j][k];
            }
            if !(s > 0.0) {
                return None;
            }
            let ljj = s.sqrt();
            l[j][j] = ljj;
            for i in (j + 1)..d {
                let mut s = self.a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                l[i][j] = s / ljj;
            }
        }
        Some(Chol { d, l })
    }

    /// Sorted eigenvalues of the symmetric part.
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        let d = self.d;
        let m = nalgebra::DMatrix::from_fn(d, d, |i, j| 0.5 * (self.a[i][j] + self.a[j][i]));
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }
}

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Copy, Debug)]
pub struct Chol {
    pub d: usize,
    pub l: [[f64; MAX_DIM]; MAX_DIM],
}

impl Chol {
    pub fn det(&self) -> f64 {
        let mut p = 1.0;
        for i in 0..self.d {
            p *= self.l[i][i];
        }
        p * p
    }

    pub fn lower(&self) -> Mat {
        Mat { d: self.d, a: self.l }
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec3 {
        let d = self.d;
        let mut y = [0.0; MAX_DIM];
        for i in 0..d {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i][k] * y[k];
            }
            y[i] = s / self.l[i][i];
        }
        let mut x = [0.0; MAX_DIM];
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in (i + 1)..d {
                s -= self.l[k][i] * x[k];
            }
            x[i] = s / self.l[i][i];
        }
        x
    }

    pub fn inverse(&self) -> Mat {
        let d = self.d;
        let mut inv = Mat::zeros(d);
        for j in 0..d {
            let mut e = [0.0; MAX_DIM];
            e[j] = 1.0;
            let c = self.solve(&e);
            for i in 0..d {
                inv.a[i][j] = c[i];
            }
        }
        for i in 0..d {
            for j in 0..i {
                let s = 0.5 * (inv.a[i][j] + inv.a[j][i]);
                inv.a[i][j] = s;
                inv.a[j][i] = s;
            }
        }
        inv
    }
}

#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

pub fn dist(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub fn to_vec3(x: &[f64]) -> Vec3 {
    let mut r = [0.0; MAX_DIM];
    r[..x.len()].copy_from_slice(x);
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_inverse_and_det() {
        let m = Mat::from_rows(&[vec![2.0, 0.3, 0.1], vec![0.3, 1.5, -0.2], vec![0.1, -0.2, 1.0]]).unwrap();
        let c = m.cholesky().unwrap();
        let inv = c.inverse();
        let p = m.mul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p.a[i][j] - e).abs() < 1e-14);
            }
        }
        let ev = m.sym_eigenvalues();
        assert!((c.det() - ev.iter().product::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn indefinite_has_no_cholesky() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(m.cholesky().is_none());
    }
}
