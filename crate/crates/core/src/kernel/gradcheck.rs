//! Central finite-difference verification of analytic gradients.

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Denominator floor: components smaller than this are effectively
    /// compared by absolute error scaled by `abs_floor`.
    pub abs_floor: f64,
    /// A component is a kink when its one-sided slopes disagree by more
    /// than `kink_tolerance * max(|forward|, |backward|, 1)`.
    pub kink_tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            tolerance: 1e-5,
            abs_floor: 1e-5,
            kink_tolerance: 1e-3,
        }
    }
}

impl GradCheckConfig {
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Component with the largest error, if any was checked.
    pub worst_index: Option<usize>,
    pub checked: usize,
    /// Components skipped because the function is not differentiable
    /// inside the finite-difference stencil.
    pub kink_excluded: Vec<usize>,
    pub passed: bool,
}

/// Compares `analytic` against central finite differences of the scalar
/// function `f` at `point`, one component at a time.
pub fn grad_check(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    config: &GradCheckConfig,
) -> GradCheckReport {
    assert_eq!(point.len(), analytic.len(), "gradient length differs from point");
    let h = config.step;
    let mut x = point.to_vec();
    let f0 = f(&x);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: None,
        checked: 0,
        kink_excluded: Vec::new(),
        passed: true,
    };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let f_plus = f(&x);
        x[i] = orig - h;
        let f_minus = f(&x);
        x[i] = orig;

        let forward = (f_plus - f0) / h;
        let backward = (f0 - f_minus) / h;
        if (forward - backward).abs() > config.kink_tolerance * forward.abs().max(backward.abs()).max(1.0) {
            report.kink_excluded.push(i);
            continue;
        }
        let numeric = (f_plus - f_minus) / (2.0 * h);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(config.abs_floor);
        report.checked += 1;
        if err.is_nan() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = Some(i);
        }
    }
    report.passed = report.max_rel_error < config.tolerance;
    report
}

/// Checks `backward` of a tensor op by scalarizing its output with fixed
/// `weights`: the scalar is `<weights, forward(x)>` and its gradient is
/// `backward(weights, x)`.
pub fn grad_check_op(
    forward: impl Fn(&Tensor) -> Tensor,
    backward: impl Fn(&Tensor, &Tensor) -> Tensor,
    input: &Tensor,
    weights: &Tensor,
    config: &GradCheckConfig,
) -> GradCheckReport {
    let analytic = backward(weights, input);
    let shape = input.shape().to_vec();
    grad_check(
        |x| {
            let t = Tensor::new(shape.clone(), x.to_vec()).expect("perturbed input keeps its shape");
            forward(&t).dot(weights).expect("weights match the output shape")
        },
        input.data(),
        analytic.data(),
        config,
    )
}
