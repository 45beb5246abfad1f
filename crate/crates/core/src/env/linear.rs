//! Linear-Gaussian system with quadratic cost.

use nalgebra::{DMatrix, DVector};

use super::{check_state_action, Environment};
use crate::error::{check_dim, Error, Result};

/// `x' = A x + B u + diag(noise_std) eps`, cost `x'Qx + u'Ru`.
#[derive(Clone, Debug)]
pub struct LinearEnv {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    noise_std: Vec<f64>,
    x0: Vec<f64>,
}

impl LinearEnv {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        noise_std: Vec<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        x0: Vec<f64>,
    ) -> Result<Self> {
        let d = a.nrows();
        let m = b.ncols();
        check_dim("A columns", d, a.ncols())?;
        check_dim("B rows", d, b.nrows())?;
        check_dim("noise std", d, noise_std.len())?;
        check_dim("x0", d, x0.len())?;
        check_dim("Q rows", d, q.nrows())?;
        check_dim("Q columns", d, q.ncols())?;
        check_dim("R rows", m, r.nrows())?;
        check_dim("R columns", m, r.ncols())?;
        if noise_std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("noise std must be positive".into()));
        }
        for (name, mat) in [("Q", &q), ("R", &r)] {
            if (mat - mat.transpose()).amax() > 1e-12 {
                return Err(Error::Config(format!("{name} must be symmetric")));
            }
            let eig = mat.clone().symmetric_eigenvalues();
            if eig.iter().any(|&l| l < 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be positive semidefinite for a nonnegative cost"
                )));
            }
        }
        Ok(Self {
            a,
            b,
            q,
            r,
            noise_std,
            x0,
        })
    }

    /// Scalar system `x' = a x + b u + s eps`, cost `q x^2 + r u^2`.
    pub fn scalar(a: f64, b: f64, noise_std: f64, q: f64, r: f64, x0: f64) -> Result<Self> {
        let m = |v| DMatrix::from_element(1, 1, v);
        Self::new(m(a), m(b), vec![noise_std], m(q), m(r), vec![x0])
    }
}

impl Environment for LinearEnv {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn action_dim(&self) -> usize {
        self.b.ncols()
    }

    fn initial_state(&self) -> &[f64] {
        &self.x0
    }

    fn noise_std(&self) -> &[f64] {
        &self.noise_std
    }

    fn euler_mean_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) -> Result<()> {
        check_state_action(self, x, u)?;
        let (d, m) = (self.state_dim(), self.action_dim());
        for (i, o) in out.iter_mut().enumerate().take(d) {
            let mut acc = 0.0;
            for j in 0..d {
                acc += self.a[(i, j)] * x[j];
            }
            for j in 0..m {
                acc += self.b[(i, j)] * u[j];
            }
            *o = acc;
        }
        Ok(())
    }

    fn cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        let uv = DVector::from_column_slice(u);
        let c = xv.dot(&(&self.q * &xv)) + uv.dot(&(&self.r * &uv));
        // PSD forms can round to tiny negatives
        c.max(0.0)
    }
}
