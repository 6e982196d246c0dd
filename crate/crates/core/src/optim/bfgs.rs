//! Dense BFGS with a strong Wolfe line search.

use super::line_search::{strong_wolfe, LineSearchOutcome};
use super::{dot, norm, Counted, MinimizeResult, Objective, OptimizerSettings, Termination, TraceEntry};

pub fn bfgs_minimize(obj: &mut dyn Objective, x0: &[f64], s: &OptimizerSettings) -> MinimizeResult {
    let n = x0.len();
    let mut c = Counted { inner: obj, evaluations: 0, failures: 0 };
    let mut x = x0.to_vec();
    let (mut f, mut g) = match c.eval(&x) {
        Some(v) => v,
        None => {
            return MinimizeResult {
                x,
                loss: s.failed_loss,
                grad_norm: f64::NAN,
                iterations: 0,
                evaluations: c.evaluations,
                failed_evaluations: c.failures,
                termination: Termination::LineSearchFailure,
                trace: vec![],
                rejections: vec![],
            }
        }
    };
    let mut h = identity(n);
    let mut f_prev = f + 0.5 * norm(&g);
    let mut trace = vec![TraceEntry { iter: 0, loss: f, grad_norm: norm(&g), step_norm: 0.0, radius: None }];
    let mut iter = 0;
    let termination = loop {
        if norm(&g) <= s.gtol * (1.0 + f.abs()) {
            break Termination::GradientTol;
        }
        if iter >= s.max_iter {
            break Termination::MaxIter;
        }
        let mut p: Vec<f64> = h.iter().map(|r| -dot(r, &g)).collect();
        let mut d0 = dot(&g, &p);
        if !(d0 < 0.0) {
            h = identity(n);
            p = g.iter().map(|v| -v).collect();
            d0 = dot(&g, &p);
        }
        let alpha1 = {
            let a = 1.01 * 2.0 * (f - f_prev) / d0;
            if a.is_finite() && a > 0.0 { a.min(1.0) } else { 1.0 }
        };
        let point = match strong_wolfe(&mut c, &x, &p, f, &g, alpha1, s) {
            LineSearchOutcome::Wolfe(pt) | LineSearchOutcome::Armijo(pt) => pt,
            LineSearchOutcome::Failed => break Termination::LineSearchFailure,
        };
        let step: Vec<f64> = p.iter().map(|v| point.alpha * v).collect();
        let y: Vec<f64> = point.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let step_norm = norm(&step);
        let x_norm = norm(&x);
        for (xi, si) in x.iter_mut().zip(&step) {
            *xi += si;
        }
        f_prev = f;
        f = point.f;
        g = point.g;
        iter += 1;
        trace.push(TraceEntry { iter, loss: f, grad_norm: norm(&g), step_norm, radius: None });
        if step_norm <= s.step_tol * (1.0 + x_norm) {
            break Termination::StepStall;
        }
        let sy = dot(&step, &y);
        if sy > 1e-12 * step_norm * norm(&y) {
            if iter == 1 {
                let scale = sy / dot(&y, &y);
                h.iter_mut().enumerate().for_each(|(i, r)| {
                    r.iter_mut().for_each(|v| *v = 0.0);
                    r[i] = scale;
                });
            }
            update_inverse(&mut h, &step, &y, sy);
        }
    };
    MinimizeResult {
        grad_norm: norm(&g),
        x,
        loss: f,
        iterations: iter,
        evaluations: c.evaluations,
        failed_evaluations: c.failures,
        termination,
        trace,
        rejections: vec![],
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`.
fn update_inverse(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let rho = 1.0 / sy;
    let n = s.len();
    let hy: Vec<f64> = h.iter().map(|r| dot(r, y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
