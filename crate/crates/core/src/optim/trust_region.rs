//! Trust-region BFGS with dogleg steps.

use super::{dot, norm, Counted, MinimizeResult, Objective, OptimizerSettings, Termination, TraceEntry};

/// Dogleg step for the model `gᵀp + ½ pᵀBp` with `H = B⁻¹`, `‖p‖ ≤ radius`.
pub fn dogleg(g: &[f64], b: &[Vec<f64>], h: &[Vec<f64>], radius: f64) -> Vec<f64> {
    let pb: Vec<f64> = h.iter().map(|r| -dot(r, g)).collect();
    if norm(&pb) <= radius {
        return pb;
    }
    let bg: Vec<f64> = b.iter().map(|r| dot(r, g)).collect();
    let gg = dot(g, g);
    let gbg = dot(g, &bg);
    let gn = gg.sqrt();
    if gbg <= 0.0 {
        return g.iter().map(|v| -radius * v / gn).collect();
    }
    let pu: Vec<f64> = g.iter().map(|v| -(gg / gbg) * v).collect();
    let pu_norm = norm(&pu);
    if pu_norm >= radius {
        return g.iter().map(|v| -radius * v / gn).collect();
    }
    // ‖pu + τ (pb − pu)‖ = radius
    let dir: Vec<f64> = pb.iter().zip(&pu).map(|(a, b)| a - b).collect();
    let qa = dot(&dir, &dir);
    let qb = 2.0 * dot(&pu, &dir);
    let qc = pu_norm * pu_norm - radius * radius;
    let tau = (-qb + (qb * qb - 4.0 * qa * qc).max(0.0).sqrt()) / (2.0 * qa);
    pu.iter().zip(&dir).map(|(u, d)| u + tau * d).collect()
}

pub fn trust_region_bfgs_minimize(obj: &mut dyn Objective, x0: &[f64], s: &OptimizerSettings) -> MinimizeResult {
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
    let mut b = identity(n);
    let mut h = identity(n);
    let mut radius = s.initial_radius;
    let mut trace = vec![TraceEntry { iter: 0, loss: f, grad_norm: norm(&g), step_norm: 0.0, radius: Some(radius) }];
    let mut rejections = Vec::new();
    let mut iter = 0;
    let mut trials = 0;
    let termination = loop {
        if norm(&g) <= s.gtol * (1.0 + f.abs()) {
            break Termination::GradientTol;
        }
        if iter >= s.max_iter || trials >= 20 * s.max_iter.max(1) {
            break Termination::MaxIter;
        }
        let x_norm = norm(&x);
        if radius <= s.step_tol * (1.0 + x_norm) {
            break Termination::StepStall;
        }
        trials += 1;
        let p = dogleg(&g, &b, &h, radius);
        let bp: Vec<f64> = b.iter().map(|r| dot(r, &p)).collect();
        let predicted = -(dot(&g, &p) + 0.5 * dot(&p, &bp));
        let xt: Vec<f64> = x.iter().zip(&p).map(|(a, d)| a + d).collect();
        let trial = c.eval(&xt);
        let ratio = match &trial {
            Some((ft, _)) if predicted > 0.0 => (f - ft) / predicted,
            _ => f64::NEG_INFINITY,
        };
        let p_norm = norm(&p);
        if let Some((_, gt)) = &trial {
            let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&p, &y);
            if sy > 1e-12 * p_norm * norm(&y) {
                update_direct(&mut b, &p, &y, sy);
                update_inverse(&mut h, &p, &y, sy);
            }
        }
        let old_radius = radius;
        if ratio < 0.25 {
            radius = 0.25 * p_norm.min(radius);
        } else if ratio > 0.75 && p_norm >= 0.99 * radius {
            radius = (2.0 * radius).min(s.max_radius);
        }
        if ratio > 1e-4 {
            let (ft, gt) = trial.expect("accepted trial is feasible");
            x = xt;
            f = ft;
            g = gt;
            iter += 1;
            trace.push(TraceEntry { iter, loss: f, grad_norm: norm(&g), step_norm: p_norm, radius: Some(old_radius) });
            if p_norm <= s.step_tol * (1.0 + x_norm) {
                break Termination::StepStall;
            }
        } else {
            rejections.push((old_radius, radius));
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
        rejections,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn update_direct(b: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let bs: Vec<f64> = b.iter().map(|r| dot(r, s)).collect();
    let sbs = dot(s, &bs);
    if sbs <= 0.0 {
        return;
    }
    for i in 0..s.len() {
        for j in 0..s.len() {
            b[i][j] += -bs[i] * bs[j] / sbs + y[i] * y[j] / sy;
        }
    }
}

fn update_inverse(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = h.iter().map(|r| dot(r, y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..s.len() {
        for j in 0..s.len() {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
