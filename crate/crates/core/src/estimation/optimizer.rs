//! Derivative-free simplex minimizer and the box-to-real bijection it runs on.

#[derive(Clone, Copy, Debug)]
pub struct NmOptions {
    pub max_evals: usize,
    /// Converged once every vertex is within this sup-norm distance of the best one.
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            tol: 1e-8,
            initial_step: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub converged: bool,
    pub evals: usize,
    pub iterations: usize,
    /// Best objective value after each iteration.
    pub trace: Vec<f64>,
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn diameter(simplex: &[Vec<f64>]) -> f64 {
    let best = &simplex[0];
    simplex[1..]
        .iter()
        .flat_map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

/// Nelder–Mead with standard coefficients (reflect 1, expand 2, contract 1/2, shrink 1/2).
pub fn nelder_mead<F>(f: F, x0: &[f64], opts: &NmOptions) -> NmResult
where
    F: Fn(&[f64]) -> f64,
{
    let dim = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &[f64]| {
        evals.set(evals.get() + 1);
        sanitize(f(x))
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
    simplex.push(x0.to_vec());
    for k in 0..dim {
        let mut v = x0.to_vec();
        v[k] += opts.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| eval(v)).collect();
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;

    loop {
        // order vertices best-first; ties keep insertion order
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        trace.push(values[0]);

        if diameter(&simplex) < opts.tol {
            converged = true;
            break;
        }
        if evals.get() >= opts.max_evals {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; dim];
        for v in &simplex[..dim] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / dim as f64;
            }
        }
        let worst = simplex[dim].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(1.0);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(2.0);
            let fe = eval(&xe);
            if fe < fr {
                simplex[dim] = xe;
                values[dim] = fe;
            } else {
                simplex[dim] = xr;
                values[dim] = fr;
            }
            continue;
        }
        if fr < values[dim - 1] {
            simplex[dim] = xr;
            values[dim] = fr;
            continue;
        }
        let (xc, fc, accept) = if fr < values[dim] {
            let xc = along(0.5);
            let fc = eval(&xc);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc);
            let ok = fc < values[dim];
            (xc, fc, ok)
        };
        if accept {
            simplex[dim] = xc;
            values[dim] = fc;
            continue;
        }
        let best = simplex[0].clone();
        for i in 1..=dim {
            let shrunk: Vec<f64> = simplex[i]
                .iter()
                .zip(&best)
                .map(|(x, b)| b + 0.5 * (x - b))
                .collect();
            values[i] = eval(&shrunk);
            simplex[i] = shrunk;
        }
    }

    NmResult {
        x: simplex[0].clone(),
        f: values[0],
        converged,
        evals: evals.get(),
        iterations,
        trace,
    }
}

/// Scaled logistic map from the real line onto `(lo, hi)`.
#[inline]
pub fn to_box(x: f64, lo: f64, hi: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    lo + (hi - lo) * s
}

/// Inverse of [`to_box`].
#[inline]
pub fn from_box(theta: f64, lo: f64, hi: f64) -> f64 {
    ((theta - lo) / (hi - theta)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(rosen, &[-1.2, 1.0], &NmOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn trace_is_monotone() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.3).powi(2)).sum::<f64>();
        let r = nelder_mead(f, &[2.0, -1.0, 0.5, 4.0], &NmOptions::default());
        assert!(r.converged);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn budget_exhaustion_reports_not_converged() {
        let f = |x: &[f64]| x[0].powi(2) + x[1].powi(2);
        let r = nelder_mead(
            f,
            &[3.0, 3.0],
            &NmOptions {
                max_evals: 10,
                ..Default::default()
            },
        );
        assert!(!r.converged);
    }

    #[test]
    fn nan_is_treated_as_worst() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 1.0).powi(2) };
        let r = nelder_mead(f, &[0.5], &NmOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn box_map_round_trips() {
        for &t in &[1e-6 + 1e-9, 0.2, 2.5, 4.999] {
            let x = from_box(t, 1e-6, 5.0);
            assert!((to_box(x, 1e-6, 5.0) - t).abs() < 1e-12 * t.max(1.0));
        }
        assert!(to_box(800.0, -2.0, 2.0) <= 2.0);
        assert!(to_box(-800.0, -2.0, 2.0) >= -2.0);
    }
}
