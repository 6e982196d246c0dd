//! Pointwise closures consumed by the finite-element system: the stress
//! closure (Wineman-Pipkin coefficients of the damaged flow law) and the
//! trainable damage-rate closure `s(J₂, φ; θ)`.

use std::fmt;

use crate::error::{contract, Result};
use crate::models::{albrecht_levermann_smoothed, DamageParams, GlenParams, GuardSmoothing};
use crate::neural::{mlp_gradients, mlp_param_jvp, mlp_value_and_input_grad, Activation, InputScaler, MlpParams};
use crate::tensor::{ConstitutiveRelation, TensorSignature};

/// Coefficients `c = [c₁, c₂]` of `τ = c₁ I + c₂ ε̇` and their partials
/// with respect to `(J₁, J₂, φ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StressCoefficients {
    pub c: [f64; 2],
    pub d_j1: [f64; 2],
    pub d_j2: [f64; 2],
    pub d_phi: [f64; 2],
}

pub trait StressClosure: Send + Sync {
    fn coefficients(&self, j1: f64, j2: f64, phi: f64) -> StressCoefficients;
}

/// Glen flow softened by `1 − (1 − ζ) φ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DamagedGlen {
    pub glen: GlenParams,
    pub zeta: f64,
}

impl DamagedGlen {
    pub fn new(glen: GlenParams, damage: &DamageParams) -> Self {
        DamagedGlen { glen, zeta: damage.zeta }
    }

    pub fn undamaged(glen: GlenParams) -> Self {
        DamagedGlen { glen, zeta: 1.0 }
    }
}

impl StressClosure for DamagedGlen {
    fn coefficients(&self, _j1: f64, j2: f64, phi: f64) -> StressCoefficients {
        let (v, dv) = self.glen.viscosity(j2);
        let k = 1.0 - self.zeta;
        let soft = 1.0 - k * phi;
        StressCoefficients {
            c: [0.0, soft * v],
            d_j1: [0.0, 0.0],
            d_j2: [0.0, soft * dv],
            d_phi: [0.0, -k * v],
        }
    }
}

/// A damage-rate closure with a trainable parameter vector.
pub trait DamageRate: Send + Sync + fmt::Debug {
    fn name(&self) -> String;
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]) -> Result<()>;
    /// `(s, ∂s/∂J₂, ∂s/∂φ)` at one point.
    fn eval(&self, j2: f64, phi: f64) -> (f64, f64, f64);
    /// `Σ cotᵢ ∂s(pointᵢ)/∂θ`.
    fn param_vjp(&self, points: &[[f64; 2]], cotangents: &[f64]) -> Vec<f64>;
    /// `∂s(pointᵢ)/∂θ · direction` for every point.
    fn param_jvp(&self, points: &[[f64; 2]], direction: &[f64]) -> Vec<f64>;
    fn clone_box(&self) -> Box<dyn DamageRate>;

    fn rate(&self, j2: f64, phi: f64) -> f64 {
        self.eval(j2, phi).0
    }

    fn param_count(&self) -> usize {
        self.params().len()
    }
}

impl Clone for Box<dyn DamageRate> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<()> {
    if expected != got {
        return Err(contract(format!("{what}: expected {expected} values, got {got}")));
    }
    Ok(())
}

/// Albrecht-Levermann rate with `θ = [γ_f, γ_h]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlbrechtLevermannRate {
    pub params: DamageParams,
    pub smoothing: GuardSmoothing,
}

impl AlbrechtLevermannRate {
    pub fn exact(params: DamageParams) -> Self {
        AlbrechtLevermannRate { params, smoothing: GuardSmoothing::default() }
    }

    pub fn smoothed(params: DamageParams, smoothing: GuardSmoothing) -> Self {
        AlbrechtLevermannRate { params, smoothing }
    }
}

impl DamageRate for AlbrechtLevermannRate {
    fn name(&self) -> String {
        "albrecht-levermann".into()
    }

    fn params(&self) -> Vec<f64> {
        vec![self.params.gamma_f, self.params.gamma_h]
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len(2, params.len(), "albrecht-levermann parameters")?;
        self.params.gamma_f = params[0];
        self.params.gamma_h = params[1];
        Ok(())
    }

    fn eval(&self, j2: f64, phi: f64) -> (f64, f64, f64) {
        albrecht_levermann_smoothed(j2, phi, &self.params, &self.smoothing).0
    }

    fn param_vjp(&self, points: &[[f64; 2]], cotangents: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; 2];
        for (p, c) in points.iter().zip(cotangents) {
            let d = albrecht_levermann_smoothed(p[0], p[1], &self.params, &self.smoothing).1;
            g[0] += c * d[0];
            g[1] += c * d[1];
        }
        g
    }

    fn param_jvp(&self, points: &[[f64; 2]], direction: &[f64]) -> Vec<f64> {
        points
            .iter()
            .map(|p| {
                let d = albrecht_levermann_smoothed(p[0], p[1], &self.params, &self.smoothing).1;
                d[0] * direction[0] + d[1] * direction[1]
            })
            .collect()
    }

    fn clone_box(&self) -> Box<dyn DamageRate> {
        Box::new(*self)
    }
}

/// Rate that ignores its inputs; `θ = [value]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantRate(pub f64);

impl DamageRate for ConstantRate {
    fn name(&self) -> String {
        format!("constant({})", self.0)
    }

    fn params(&self) -> Vec<f64> {
        vec![self.0]
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len(1, params.len(), "constant rate")?;
        self.0 = params[0];
        Ok(())
    }

    fn eval(&self, _j2: f64, _phi: f64) -> (f64, f64, f64) {
        (self.0, 0.0, 0.0)
    }

    fn param_vjp(&self, _points: &[[f64; 2]], cotangents: &[f64]) -> Vec<f64> {
        vec![cotangents.iter().sum()]
    }

    fn param_jvp(&self, points: &[[f64; 2]], direction: &[f64]) -> Vec<f64> {
        vec![direction[0]; points.len()]
    }

    fn clone_box(&self) -> Box<dyn DamageRate> {
        Box::new(*self)
    }
}

/// Network rate `s = net(scale(J₂, φ))`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkRate {
    pub net: MlpParams,
    pub scaler: InputScaler,
}

impl NetworkRate {
    pub fn new(net: MlpParams, scaler: InputScaler) -> Result<Self> {
        if net.input_size() != 2 || net.output_size() != 1 {
            return Err(contract("damage-rate networks map (J₂, φ) to one value"));
        }
        check_len(2, scaler.mean.len(), "scaler")?;
        scaler.validate()?;
        Ok(NetworkRate { net, scaler })
    }

    fn rows(points: &[[f64; 2]]) -> Vec<Vec<f64>> {
        points.iter().map(|p| p.to_vec()).collect()
    }
}

impl DamageRate for NetworkRate {
    fn name(&self) -> String {
        let hidden: Vec<String> = self.net.layer_sizes[1..self.net.layer_sizes.len() - 1]
            .iter()
            .map(|s| s.to_string())
            .collect();
        format!("mlp({})-{}", hidden.join(","), self.net.activation.name())
    }

    fn params(&self) -> Vec<f64> {
        self.net.flatten()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.net.set_flat(params)
    }

    fn eval(&self, j2: f64, phi: f64) -> (f64, f64, f64) {
        let (s, g) = mlp_value_and_input_grad(&self.net, &self.scaler, &[j2, phi]);
        (s, g[0], g[1])
    }

    fn param_vjp(&self, points: &[[f64; 2]], cotangents: &[f64]) -> Vec<f64> {
        mlp_gradients(&self.net, &self.scaler, &Self::rows(points), cotangents)
            .expect("arity fixed at construction")
    }

    fn param_jvp(&self, points: &[[f64; 2]], direction: &[f64]) -> Vec<f64> {
        mlp_param_jvp(&self.net, &self.scaler, &Self::rows(points), direction)
            .expect("arity fixed at construction")
    }

    fn clone_box(&self) -> Box<dyn DamageRate> {
        Box::new(self.clone())
    }
}

/// Scalar-output relation `s(J₂, φ)` over inputs `(ε̇, φ)`, wrapping any rate.
pub fn damage_rate_cr(rate: Box<dyn DamageRate>) -> Result<ConstitutiveRelation> {
    let params = rate.params();
    ConstitutiveRelation::new(
        rate.name(),
        &[TensorSignature::symmetric2(2), TensorSignature::scalar()],
        TensorSignature::scalar(),
        move |j: &[f64], _p: &[f64]| vec![rate.rate(j[1], j[2])],
        params,
    )
}

/// Stress relation whose two coefficients are outputs of a random network
/// over `(J₁, J₂)`.
pub fn neural_stress_cr(seed: u64, hidden: &[usize], activation: Activation) -> Result<ConstitutiveRelation> {
    let mut sizes = vec![2];
    sizes.extend_from_slice(hidden);
    sizes.push(2);
    let net = MlpParams::random_normal(seed, &sizes, activation)?;
    let params = net.flatten();
    ConstitutiveRelation::new(
        format!("neural-stress-{seed}"),
        &[TensorSignature::symmetric2(2)],
        TensorSignature::symmetric2(2),
        move |j: &[f64], p: &[f64]| match net.with_flat(p) {
            Ok(local) => local.eval_scaled(j),
            Err(_) => vec![],
        },
        params,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::mlp_init;
    use approx::assert_relative_eq;

    #[test]
    fn damaged_glen_partials_match_differences() {
        let c = DamagedGlen::new(GlenParams::default(), &DamageParams::default());
        let (j2, phi) = (1.7, 0.3);
        let base = c.coefficients(0.0, j2, phi);
        let h = 1e-6;
        let dj = (c.coefficients(0.0, j2 + h, phi).c[1] - c.coefficients(0.0, j2 - h, phi).c[1]) / (2.0 * h);
        let dp = (c.coefficients(0.0, j2, phi + h).c[1] - c.coefficients(0.0, j2, phi - h).c[1]) / (2.0 * h);
        assert_relative_eq!(base.d_j2[1], dj, max_relative = 1e-7);
        assert_relative_eq!(base.d_phi[1], dp, max_relative = 1e-7);
        assert_eq!(DamagedGlen::undamaged(GlenParams::default()).coefficients(0.0, j2, 0.9).d_phi[1], 0.0);
    }

    #[test]
    fn network_rate_vjp_and_jvp_are_adjoint() {
        let net = mlp_init(4, &[2, 3, 3, 1], Activation::Tanh).unwrap();
        let rate = NetworkRate::new(net, InputScaler { mean: vec![2.0, 0.3], std: vec![1.5, 0.2] }).unwrap();
        let pts: Vec<[f64; 2]> = (0..9).map(|i| [0.4 * i as f64, 0.1 * (i % 4) as f64]).collect();
        let cot: Vec<f64> = (0..9).map(|i| (i as f64 * 1.3).sin()).collect();
        let dir: Vec<f64> = (0..rate.param_count()).map(|i| (i as f64 * 0.7).cos()).collect();
        let g = rate.param_vjp(&pts, &cot);
        let t = rate.param_jvp(&pts, &dir);
        let lhs: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let rhs: f64 = t.iter().zip(&cot).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn albrecht_levermann_rate_is_linear_in_parameters() {
        let mut r = AlbrechtLevermannRate::exact(DamageParams::default());
        let pts = [[3.0, 0.0], [0.5, 0.2], [1.5, 0.1]];
        let g = r.param_vjp(&pts, &[1.0, 1.0, 1.0]);
        let s0: f64 = pts.iter().map(|p| r.rate(p[0], p[1])).sum();
        assert_relative_eq!(s0, g[0] * 0.5 + g[1] * 0.1, max_relative = 1e-14);
        r.set_params(&[1.0, 2.0]).unwrap();
        assert_eq!(r.params(), vec![1.0, 2.0]);
        assert!(r.set_params(&[1.0]).is_err());
    }
}
