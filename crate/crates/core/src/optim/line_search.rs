//! Line search for the strong Wolfe conditions with cubic interpolation.
//! Infeasible trial points count as a very large loss, which pushes the
//! search back toward shorter steps.

use super::{dot, Counted, OptimizerSettings};

pub(crate) struct LinePoint {
    pub alpha: f64,
    pub f: f64,
    pub g: Vec<f64>,
}

pub(crate) enum LineSearchOutcome {
    /// Strong Wolfe point.
    Wolfe(LinePoint),
    /// Sufficient decrease only.
    Armijo(LinePoint),
    Failed,
}

struct Sample {
    alpha: f64,
    f: f64,
    /// Directional derivative, absent at infeasible points.
    d: Option<f64>,
    g: Option<Vec<f64>>,
}

/// Unsafeguarded minimizer of the cubic through two samples with slopes.
fn cubic_min(a: &Sample, b: &Sample) -> Option<f64> {
    let (da, db) = (a.d?, b.d?);
    let d1 = da + db - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let den = db - da + 2.0 * d2;
    let t = b.alpha - (b.alpha - a.alpha) * (db + d2 - d1) / den;
    t.is_finite().then_some(t)
}

/// Minimizer of the cubic (or quadratic, without a slope at `b`) through two
/// samples, kept inside the middle 80% of the bracket.
fn interpolate(a: &Sample, b: &Sample) -> f64 {
    let (lo, hi) = (a.alpha.min(b.alpha), a.alpha.max(b.alpha));
    let width = hi - lo;
    let da = a.d.unwrap_or(0.0);
    let guess = match b.d {
        Some(_) => cubic_min(a, b).unwrap_or(f64::NAN),
        None => {
            let h = b.alpha - a.alpha;
            let curv = b.f - a.f - da * h;
            if curv > 0.0 {
                a.alpha - da * h * h / (2.0 * curv)
            } else {
                f64::NAN
            }
        }
    };
    let margin = 0.1 * width;
    if guess.is_finite() {
        guess.clamp(lo + margin, hi - margin)
    } else {
        0.5 * (lo + hi)
    }
}

pub(crate) fn strong_wolfe(
    obj: &mut Counted<'_>,
    x: &[f64],
    p: &[f64],
    f0: f64,
    g0: &[f64],
    alpha1: f64,
    s: &OptimizerSettings,
) -> LineSearchOutcome {
    let d0 = dot(g0, p);
    if !(d0 < 0.0) {
        return LineSearchOutcome::Failed;
    }
    let mut probe = |alpha: f64| -> Sample {
        let xt: Vec<f64> = x.iter().zip(p).map(|(a, b)| a + alpha * b).collect();
        match obj.eval(&xt) {
            Some((f, g)) => Sample { alpha, f, d: Some(dot(&g, p)), g: Some(g) },
            None => Sample { alpha, f: s.failed_loss, d: None, g: None },
        }
    };
    let armijo = |t: &Sample| t.f <= f0 + s.c1 * t.alpha * d0;
    let curvature = |t: &Sample| t.d.is_some_and(|d| d.abs() <= -s.c2 * d0);
    let done = |t: Sample| LinePoint { alpha: t.alpha, f: t.f, g: t.g.expect("feasible point") };
    // One extra probe at the interpolated minimizer when it lies well away
    // from an accepted Wolfe point.
    let refine = |probe: &mut dyn FnMut(f64) -> Sample, other: &Sample, cur: Sample| -> Sample {
        let Some(t) = cubic_min(other, &cur) else { return cur };
        let t = t.clamp(0.1 * cur.alpha, 4.0 * cur.alpha);
        if (t - cur.alpha).abs() <= 0.05 * cur.alpha {
            return cur;
        }
        let cand = probe(t);
        if cand.d.is_some() && cand.f < cur.f && cand.f <= f0 + s.c1 * cand.alpha * d0 && cand.d.is_some_and(|d| d.abs() <= -s.c2 * d0) {
            cand
        } else {
            cur
        }
    };

    let mut prev = Sample { alpha: 0.0, f: f0, d: Some(d0), g: Some(g0.to_vec()) };
    let mut alpha = alpha1;
    let mut bracket: Option<(Sample, Sample)> = None;
    for i in 0..s.max_line_search {
        let cur = probe(alpha);
        if cur.d.is_none() || !armijo(&cur) || (i > 0 && cur.f >= prev.f) {
            bracket = Some((prev, cur));
            break;
        }
        if curvature(&cur) {
            return LineSearchOutcome::Wolfe(done(refine(&mut probe, &prev, cur)));
        }
        if cur.d.is_some_and(|d| d >= 0.0) {
            bracket = Some((cur, prev));
            break;
        }
        if i + 1 == s.max_line_search {
            return LineSearchOutcome::Armijo(done(cur));
        }
        alpha *= 2.0;
        prev = cur;
    }
    let Some((mut lo, mut hi)) = bracket else {
        return LineSearchOutcome::Failed;
    };
    for _ in 0..s.max_line_search {
        if (hi.alpha - lo.alpha).abs() <= 1e-14 * lo.alpha.abs().max(1e-300) + 1e-300 {
            break;
        }
        let a = interpolate(&lo, &hi);
        let cur = probe(a);
        if cur.d.is_none() || !armijo(&cur) || cur.f >= lo.f {
            hi = cur;
            continue;
        }
        if curvature(&cur) {
            return LineSearchOutcome::Wolfe(done(refine(&mut probe, &lo, cur)));
        }
        let d = cur.d.expect("feasible");
        if d * (hi.alpha - lo.alpha) >= 0.0 {
            hi = lo;
        }
        lo = cur;
    }
    if lo.alpha > 0.0 {
        LineSearchOutcome::Armijo(done(lo))
    } else {
        LineSearchOutcome::Failed
    }
}
