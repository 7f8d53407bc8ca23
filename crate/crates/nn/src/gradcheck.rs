//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::param::Module;

/// Gradients smaller than this are compared in absolute terms.
pub const ABS_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// Checks `analytic` against central differences of `loss` at `point`,
/// restricted to `coords`. `point` is restored before returning.
pub fn grad_check<F>(point: &mut [f64], analytic: &[f64], coords: &[usize], epsilon: f64, mut loss: F) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let mut worst = 0.0_f64;
    for &i in coords {
        let orig = point[i];
        point[i] = orig + epsilon;
        let plus = loss(point);
        point[i] = orig - epsilon;
        let minus = loss(point);
        point[i] = orig;
        let numeric = (plus - minus) / (2.0 * epsilon);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(param name, index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Samples up to `per_param` coordinates of every trainable parameter of
/// `module` and compares the analytic gradient against central differences.
///
/// `objective(module, with_grad)` must return the loss; when `with_grad` is
/// true it must also accumulate gradients into the (pre-zeroed) parameters.
/// The objective has to be deterministic across calls, so any dropout must
/// be driven by a freshly seeded RNG each time.
pub fn check_module<M, F>(module: &mut M, epsilon: f64, per_param: usize, seed: u64, mut objective: F) -> GradCheckReport
where
    M: Module,
    F: FnMut(&mut M, bool) -> f64,
{
    module.zero_grad();
    objective(module, true);
    let mut analytic: Vec<(String, Vec<f64>, bool)> = Vec::new();
    module.visit(&mut |p| analytic.push((p.name().to_string(), p.grad.clone(), p.trainable)));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    for (pi, (name, grads, trainable)) in analytic.iter().enumerate() {
        if !trainable {
            continue;
        }
        let n = grads.len();
        let coords = sample(&mut rng, n, per_param.min(n)).into_vec();
        for i in coords {
            let numeric = {
                let mut plus = 0.0;
                let mut minus = 0.0;
                for (sign, out) in [(1.0, &mut plus), (-1.0, &mut minus)] {
                    nudge(module, pi, i, sign * epsilon);
                    *out = objective(module, false);
                    nudge(module, pi, i, -sign * epsilon);
                }
                (plus - minus) / (2.0 * epsilon)
            };
            let err = relative_error(grads[i], numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), i, grads[i], numeric));
            }
        }
    }
    report
}

fn nudge<M: Module>(module: &mut M, param_index: usize, coord: usize, delta: f64) {
    let mut k = 0;
    module.visit_mut(&mut |p| {
        if k == param_index {
            p.value[coord] += delta;
        }
        k += 1;
    });
}
