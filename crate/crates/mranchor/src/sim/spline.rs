//! Natural cubic spline interpolation through equally spaced waypoints,
//! used to generate C2-smooth synthetic trajectories.

/// One-dimensional natural cubic spline with knots at 0, 1, ..., n-1.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    values: Vec<f64>,
    second_derivatives: Vec<f64>,
}

impl CubicSpline {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len();
        assert!(n >= 2, "spline needs at least two waypoints");
        // Tridiagonal solve for the second derivatives, natural boundary.
        let mut m = vec![0.0; n];
        if n > 2 {
            let mut diag = vec![4.0; n - 2];
            let mut rhs: Vec<f64> = (1..n - 1)
                .map(|i| 6.0 * (values[i + 1] - 2.0 * values[i] + values[i - 1]))
                .collect();
            for i in 1..n - 2 {
                let w = 1.0 / diag[i - 1];
                diag[i] -= w;
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; n - 2];
            sol[n - 3] = rhs[n - 3] / diag[n - 3];
            for i in (0..n - 3).rev() {
                sol[i] = (rhs[i] - sol[i + 1]) / diag[i];
            }
            m[1..n - 1].copy_from_slice(&sol);
        }
        Self {
            values,
            second_derivatives: m,
        }
    }

    /// Evaluate at `u` in [0, n-1]; clamped outside.
    pub fn eval(&self, u: f64) -> f64 {
        let n = self.values.len();
        let u = u.clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 2);
        let t = u - i as f64;
        let (a, b) = (1.0 - t, t);
        a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * self.second_derivatives[i]
                + (b * b * b - b) * self.second_derivatives[i + 1])
                / 6.0
    }
}
