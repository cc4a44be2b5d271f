/// A differentiable log density over `ℝᵈ`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns `ln p(x)` and writes `∇ ln p(x)` into `grad`. Non-finite values
    /// signal points outside the region where the density can be evaluated.
    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_gradient(x, &mut g)
    }
}

impl<T: LogDensity + ?Sized> LogDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn log_density_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_density_gradient(x, grad)
    }
}
