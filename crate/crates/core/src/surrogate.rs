//! Gaussian-process surrogate with expected improvement, used by the guided
//! search strategy. Inputs live in the unit cube.

use alloc::vec::Vec;

const NUGGET: f64 = 1e-4;
const MIN_VARIANCE: f64 = 1e-12;

/// Zero-mean GP with a unit-variance RBF kernel over standardized targets.
/// The Cholesky factor grows one row per observation.
#[derive(Debug, Clone)]
pub(crate) struct Surrogate {
    lengthscale: f64,
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    chol: Vec<Vec<f64>>,
}

pub(crate) struct Posterior<'a> {
    gp: &'a Surrogate,
    weights: Vec<f64>,
    scale: f64,
    best: f64,
}

impl Surrogate {
    pub(crate) fn new(lengthscale: f64) -> Self {
        Self { lengthscale, xs: Vec::new(), ys: Vec::new(), chol: Vec::new() }
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        libm::exp(-0.5 * d2 / (self.lengthscale * self.lengthscale))
    }

    /// Solves `L v = k` by forward substitution.
    fn forward(&self, k: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(k.len());
        for (i, row) in self.chol.iter().enumerate() {
            let s: f64 = row[..i].iter().zip(&v).map(|(a, b)| a * b).sum();
            v.push((k[i] - s) / row[i]);
        }
        v
    }

    pub(crate) fn add(&mut self, x: Vec<f64>, y: f64) {
        let k: Vec<f64> = self.xs.iter().map(|p| self.kernel(p, &x)).collect();
        let mut row = self.forward(&k);
        let d = 1.0 + NUGGET - row.iter().map(|v| v * v).sum::<f64>();
        row.push(libm::sqrt(d.max(MIN_VARIANCE)));
        self.chol.push(row);
        self.xs.push(x);
        self.ys.push(y);
    }

    pub(crate) fn posterior(&self) -> Posterior<'_> {
        let n = self.ys.len() as f64;
        let mean = self.ys.iter().sum::<f64>() / n;
        let var = self.ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let scale = if var > 0.0 { libm::sqrt(var) } else { 1.0 };
        let z: Vec<f64> = self.ys.iter().map(|y| (y - mean) / scale).collect();
        // weights = L^-T L^-1 z
        let mut w = self.forward(&z);
        for i in (0..w.len()).rev() {
            let s: f64 = ((i + 1)..w.len()).map(|j| self.chol[j][i] * w[j]).sum();
            w[i] = (w[i] - s) / self.chol[i][i];
        }
        let best = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Posterior { gp: self, weights: w, scale, best }
    }
}

impl Posterior<'_> {
    /// Mean and variance in standardized units.
    pub(crate) fn predict(&self, x: &[f64]) -> (f64, f64) {
        let k: Vec<f64> = self.gp.xs.iter().map(|p| self.gp.kernel(p, x)).collect();
        let mu = k.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        let v = self.gp.forward(&k);
        let var = 1.0 - v.iter().map(|a| a * a).sum::<f64>();
        (mu, var.max(MIN_VARIANCE))
    }

    /// Expected improvement over the best observation by at least `xi`
    /// (in original target units).
    pub(crate) fn expected_improvement(&self, x: &[f64], xi: f64) -> f64 {
        let (mu, var) = self.predict(x);
        let sd = libm::sqrt(var);
        let gap = mu - self.best - xi / self.scale;
        let z = gap / sd;
        let ei = gap * normal_cdf(z) + sd * normal_pdf(z);
        ei.max(0.0) * self.scale
    }

    #[cfg(test)]
    pub(crate) fn predict_original(&self, x: &[f64]) -> f64 {
        let mean = self.gp.ys.iter().sum::<f64>() / self.gp.ys.len() as f64;
        self.predict(x).0 * self.scale + mean
    }
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

pub(crate) fn normal_pdf(z: f64) -> f64 {
    libm::exp(-0.5 * z * z) / libm::sqrt(2.0 * core::f64::consts::PI)
}
