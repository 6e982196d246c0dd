//! Hand-derived constitutive relations: Glen flow, damaged Glen flow, the
//! Albrecht-Levermann damage rate, ESTAR enhancement and the threshold
//! (Damage2) rate. These serve as ground truth and as test oracles.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::tensor::{wineman_pipkin_eval, ConstitutiveRelation, Sym2, Sym3, Tensor, TensorSignature};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlenParams {
    pub mu: f64,
    pub n: f64,
    /// Added to `J₂²` before the fractional power.
    #[serde(default = "default_eps_reg")]
    pub eps_reg: f64,
}

fn default_eps_reg() -> f64 {
    1e-12
}

impl Default for GlenParams {
    fn default() -> Self {
        GlenParams {
            mu: 1.0,
            n: 3.0,
            eps_reg: default_eps_reg(),
        }
    }
}

impl GlenParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(self.n >= 1.0) || !(self.eps_reg >= 0.0) {
            return Err(contract(format!("invalid Glen parameters {self:?}")));
        }
        Ok(())
    }

    /// Effective viscosity coefficient `μ (J₂² + ε)^((1/n − 1)/2)` and its
    /// derivative with respect to `J₂`.
    pub fn viscosity(&self, j2: f64) -> (f64, f64) {
        let e = 0.5 * (1.0 / self.n - 1.0);
        let base = j2 * j2 + self.eps_reg;
        if base == 0.0 {
            // n = 1 with no regularization is the only way to get here.
            return (self.mu, 0.0);
        }
        let v = self.mu * base.powf(e);
        (v, v * e * 2.0 * j2 / base)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DamageParams {
    pub gamma_f: f64,
    pub gamma_h: f64,
    pub eps_f: f64,
    pub eps_h: f64,
    /// Softening guard: the stress sees `(1 − ζ) φ` instead of `φ`.
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    /// Flow exponent in the fracture threshold `(1 − φ)^(−n) ε̇_f`.
    #[serde(default = "default_n")]
    pub n: f64,
}

fn default_zeta() -> f64 {
    0.001
}

fn default_n() -> f64 {
    3.0
}

impl Default for DamageParams {
    fn default() -> Self {
        DamageParams {
            gamma_f: 0.5,
            gamma_h: 0.1,
            eps_f: 2.0,
            eps_h: 1.0,
            zeta: default_zeta(),
            n: default_n(),
        }
    }
}

impl DamageParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma_f >= 0.0
            && self.gamma_h >= 0.0
            && self.eps_f > self.eps_h
            && self.eps_h > 0.0
            && self.zeta > 0.0
            && self.zeta < 1.0
            && self.n >= 1.0;
        if !ok {
            return Err(contract(format!("invalid damage parameters {self:?}")));
        }
        Ok(())
    }

    /// Multiplier `1 − (1 − ζ) φ` applied to the undamaged stress.
    pub fn softening(&self, phi: f64) -> f64 {
        1.0 - (1.0 - self.zeta) * phi
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstarParams {
    pub e_c: f64,
    pub e_s: f64,
    pub glen: GlenParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Damage2Params {
    pub tau_0: f64,
    pub eps_0: f64,
    pub kappa: f64,
    pub mu: f64,
    pub n: f64,
}

/// Glen flow law in Wineman-Pipkin form: `c = [0, μ (J₂² + ε)^((1/n − 1)/2)]`.
pub fn glen_cr(p: GlenParams) -> Result<ConstitutiveRelation> {
    p.validate()?;
    let eps = p.eps_reg;
    ConstitutiveRelation::new(
        "glen",
        &[TensorSignature::symmetric2(2)],
        TensorSignature::symmetric2(2),
        move |j: &[f64], params: &[f64]| {
            let (mu, n) = (params[0], params[1]);
            vec![0.0, mu * (j[1] * j[1] + eps).powf(0.5 * (1.0 / n - 1.0))]
        },
        vec![p.mu, p.n],
    )
}

/// Damaged Glen flow: inputs `[ε̇, φ]`, `c = [0, (1 − (1 − ζ)φ) μ (J₂² + ε)^((1/n − 1)/2)]`.
pub fn damaged_glen_cr(gp: GlenParams, dp: DamageParams) -> Result<ConstitutiveRelation> {
    gp.validate()?;
    dp.validate()?;
    ConstitutiveRelation::new(
        "damaged-glen",
        &[TensorSignature::symmetric2(2), TensorSignature::scalar()],
        TensorSignature::symmetric2(2),
        move |j: &[f64], _: &[f64]| vec![0.0, dp.softening(j[2]) * gp.viscosity(j[1]).0],
        vec![],
    )
}

/// Albrecht-Levermann damage rate as a scalar-output relation on `[ε̇, φ]`.
pub fn albrecht_levermann_cr(dp: DamageParams) -> Result<ConstitutiveRelation> {
    dp.validate()?;
    ConstitutiveRelation::new(
        "albrecht-levermann",
        &[TensorSignature::symmetric2(2), TensorSignature::scalar()],
        TensorSignature::scalar(),
        move |j: &[f64], _: &[f64]| vec![albrecht_levermann_rate(j[1], j[2], &dp)],
        vec![],
    )
}

/// Deviatoric stress from Glen's flow law.
pub fn glen_stress(strain_rate: Sym2, p: &GlenParams) -> Sym2 {
    let (visc, _) = p.viscosity(strain_rate.norm());
    strain_rate.scale(visc)
}

/// Glen stress through the generic Wineman-Pipkin path.
pub fn glen_stress_wp(strain_rate: Sym2, p: &GlenParams) -> Result<Sym2> {
    let cr = glen_cr(*p)?;
    Ok(wineman_pipkin_eval(&cr, &[Tensor::Sym2(strain_rate)])?
        .as_sym2()
        .expect("symmetric output"))
}

/// `(1 − (1 − ζ)φ)` times the Glen stress. The softening guard is applied here
/// and nowhere else.
pub fn damaged_stress(strain_rate: Sym2, phi: f64, gp: &GlenParams, dp: &DamageParams) -> Result<Sym2> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(contract(format!("damage {phi} outside [0, 1]")));
    }
    Ok(glen_stress(strain_rate, gp).scale(dp.softening(phi)))
}

/// Damage rate `s_f + s_h` with `J₂ = √(ε̇:ε̇)` as the strain-rate norm.
pub fn albrecht_levermann_rate(j2: f64, phi: f64, p: &DamageParams) -> f64 {
    albrecht_levermann_partials(j2, phi, p).0
}

/// Rate and its derivatives with respect to `J₂` and `φ` on the active branch.
pub fn albrecht_levermann_partials(j2: f64, phi: f64, p: &DamageParams) -> (f64, f64, f64) {
    let (mut s, mut ds_dj2, mut ds_dphi) = (0.0, 0.0, 0.0);
    if fracture_active(j2, phi, p) {
        s += p.gamma_f * j2 * (1.0 - phi);
        ds_dj2 += p.gamma_f * (1.0 - phi);
        ds_dphi -= p.gamma_f * j2;
    }
    if j2 <= p.eps_h && phi > 0.0 {
        s += p.gamma_h * (j2 - p.eps_h);
        ds_dj2 += p.gamma_h;
    }
    (s, ds_dj2, ds_dphi)
}

fn fracture_active(j2: f64, phi: f64, p: &DamageParams) -> bool {
    // (1 − φ)^(−n) ε̇_f < J₂, written to stay finite at φ = 1.
    let keep = 1.0 - phi;
    keep > 0.0 && j2 * keep.powf(p.n) > p.eps_f
}

/// Gradient of the rate with respect to `(γ_f, γ_h)`.
pub fn albrecht_levermann_param_grad(j2: f64, phi: f64, p: &DamageParams) -> [f64; 2] {
    let df = if fracture_active(j2, phi, p) {
        j2 * (1.0 - phi)
    } else {
        0.0
    };
    let dh = if j2 <= p.eps_h && phi > 0.0 {
        j2 - p.eps_h
    } else {
        0.0
    };
    [df, dh]
}

/// Widths of smooth switches replacing the fracture and healing guards of
/// the Albrecht-Levermann rate. Zero widths give the exact piecewise rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardSmoothing {
    /// Width in `J₂ (1 − φ)ⁿ` above `ε̇_f`.
    pub fracture: f64,
    /// Width in `φ` above zero.
    pub healing: f64,
}

impl GuardSmoothing {
    pub fn is_exact(&self) -> bool {
        self.fracture == 0.0 && self.healing == 0.0
    }
}

/// Cubic smoothstep rising from 0 at `x = 0` to 1 at `x = width`, and its
/// slope; a hard step at zero when `width` is zero.
fn switch(x: f64, width: f64) -> (f64, f64) {
    if width == 0.0 {
        return (if x > 0.0 { 1.0 } else { 0.0 }, 0.0);
    }
    let t = x / width;
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        (t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t) / width)
    }
}

/// Rate with smoothed guards: `(s, ∂s/∂J₂, ∂s/∂φ)` and `∂s/∂(γ_f, γ_h)`.
pub fn albrecht_levermann_smoothed(j2: f64, phi: f64, p: &DamageParams, sm: &GuardSmoothing) -> ((f64, f64, f64), [f64; 2]) {
    if sm.is_exact() {
        return (albrecht_levermann_partials(j2, phi, p), albrecht_levermann_param_grad(j2, phi, p));
    }
    let keep = 1.0 - phi;
    let (mut s, mut ds_dj2, mut ds_dphi, mut df) = (0.0, 0.0, 0.0, 0.0);
    if keep > 0.0 {
        let kn = keep.powf(p.n);
        let (h, dh) = switch(j2 * kn - p.eps_f, sm.fracture);
        let base = j2 * keep;
        df = base * h;
        s += p.gamma_f * df;
        ds_dj2 += p.gamma_f * (keep * h + base * dh * kn);
        ds_dphi += p.gamma_f * (-j2 * h - base * dh * p.n * j2 * kn / keep);
    }
    let (m, dm) = if j2 <= p.eps_h { (j2 - p.eps_h, 1.0) } else { (0.0, 0.0) };
    let (h, dh) = switch(phi, sm.healing);
    s += p.gamma_h * m * h;
    ds_dj2 += p.gamma_h * dm * h;
    ds_dphi += p.gamma_h * m * dh;
    ((s, ds_dj2, ds_dphi), [df, m * h])
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn axpy(alpha: f64, x: [f64; 3], y: [f64; 3]) -> [f64; 3] {
    [y[0] + alpha * x[0], y[1] + alpha * x[1], y[2] + alpha * x[2]]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Local shear-plane geometry used by ESTAR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShearPlane {
    /// Unit normal of the non-rotating shear plane.
    pub normal: [f64; 3],
    /// Unit deformational vorticity direction.
    pub omega_hat: [f64; 3],
    /// Shear strain rate on the plane.
    pub shear_strain: [f64; 3],
    /// Fraction of shear, `‖ε̇′‖ / √(ε̇:ε̇)`.
    pub lambda_s: f64,
}

/// Computes the shear plane from `ε̇`, `ω = ∇×u` and `u`.
///
/// The advective term `(u·∇)u` is reconstructed from the inputs as
/// `ε̇ u + ½ ω × u`, since `∇u = ε̇ + W` with `W v = ½ ω × v`.
pub fn estar_shear_plane(strain: Sym3, vorticity: [f64; 3], velocity: [f64; 3]) -> Result<ShearPlane> {
    let u2 = dot(velocity, velocity);
    if !(u2 > 0.0) {
        return Err(Error::DegenerateGeometry("zero velocity".into()));
    }
    let advect = axpy(0.5, cross(vorticity, velocity), strain.mul_vec(velocity));
    let omega_1 = axpy(-2.0 / u2, cross(velocity, advect), vorticity);
    let omega_d = axpy(-dot(velocity, omega_1) / u2, velocity, omega_1);
    let wn = norm(omega_d);
    let plane = cross(velocity, omega_d);
    let pn = norm(plane);
    if !(wn > 0.0) || !(pn > 0.0) {
        return Err(Error::DegenerateGeometry(
            "deformational vorticity vanishes or is parallel to the flow".into(),
        ));
    }
    let omega_hat = omega_d.map(|v| v / wn);
    let normal = plane.map(|v| v / pn);
    let en = strain.mul_vec(normal);
    let shear = axpy(
        -dot(omega_hat, en),
        omega_hat,
        axpy(-dot(normal, en), normal, en),
    );
    let j2 = strain.norm();
    let lambda_s = if j2 > 0.0 { norm(shear) / j2 } else { 0.0 };
    Ok(ShearPlane {
        normal,
        omega_hat,
        shear_strain: shear,
        lambda_s,
    })
}

/// `E(λ) = E_C + (E_S − E_C) λ²`.
pub fn estar_enhancement(lambda_s: f64, p: &EstarParams) -> f64 {
    p.e_c + (p.e_s - p.e_c) * lambda_s * lambda_s
}

/// ESTAR stress `E(λ_S)^(1/n) μ √(ε̇:ε̇)^(1/n − 1) ε̇` in 3D.
pub fn estar_stress(strain: Sym3, vorticity: [f64; 3], velocity: [f64; 3], p: &EstarParams) -> Result<Sym3> {
    if !(p.e_c > 0.0 && p.e_s > 0.0) {
        return Err(contract("ESTAR enhancement factors must be positive"));
    }
    let plane = estar_shear_plane(strain, vorticity, velocity)?;
    let e = estar_enhancement(plane.lambda_s, p);
    let (visc, _) = p.glen.viscosity(strain.norm());
    Ok(strain.scale(e.powf(1.0 / p.glen.n) * visc))
}

/// Stress level `a(J₂, φ) = (1 − φ) μ J₂^(1/n)`.
pub fn damage2_stress_level(j2: f64, phi: f64, p: &Damage2Params) -> f64 {
    (1.0 - phi) * p.mu * j2.powf(1.0 / p.n)
}

fn damage2_decay(j2: f64, p: &Damage2Params) -> f64 {
    (-(j2 - p.eps_0) / (p.eps_0 * (p.kappa - 1.0))).exp()
}

/// Envelope `b(J₂) = τ₀ exp(−(J₂ − ε̇₀)/(ε̇₀(κ − 1)))`.
pub fn damage2_envelope(j2: f64, p: &Damage2Params) -> f64 {
    p.tau_0 * damage2_decay(j2, p)
}

/// Damage that puts the stress on the envelope, `1 − (J₂/ε̇₀)^(−1/n) exp(·)`.
pub fn damage2_threshold_damage(j2: f64, p: &Damage2Params) -> f64 {
    1.0 - (j2 / p.eps_0).powf(-1.0 / p.n) * damage2_decay(j2, p)
}

/// `dφ̃/dJ₂`.
pub fn damage2_threshold_slope(j2: f64, p: &Damage2Params) -> f64 {
    let x = j2 / p.eps_0;
    x.powf(-1.0 / p.n)
        * damage2_decay(j2, p)
        * (1.0 / (p.n * j2) + 1.0 / (p.eps_0 * (p.kappa - 1.0)))
}

/// Material rate of damage for the threshold model: `dφ̃/dJ₂ · DJ₂/Dt` while
/// the stress level exceeds the envelope, zero otherwise.
pub fn damage2_rate(j2: f64, j2_material_rate: f64, phi: f64, p: &Damage2Params) -> Result<f64> {
    if !(j2 > 0.0) {
        return Err(contract("Damage2 rate needs J2 > 0"));
    }
    if damage2_envelope(j2, p) < damage2_stress_level(j2, phi, p) {
        Ok(damage2_threshold_slope(j2, p) * j2_material_rate)
    } else {
        Ok(0.0)
    }
}

/// Damage2 rate as a scalar relation on `[ε̇, φ, DJ₂/Dt]`.
pub fn damage2_cr(p: Damage2Params) -> Result<ConstitutiveRelation> {
    if !(p.tau_0 > 0.0 && p.eps_0 > 0.0 && p.kappa > 1.0) {
        return Err(contract(format!("invalid Damage2 parameters {p:?}")));
    }
    ConstitutiveRelation::new(
        "damage2",
        &[
            TensorSignature::symmetric2(2),
            TensorSignature::scalar(),
            TensorSignature::scalar(),
        ],
        TensorSignature::scalar(),
        move |j: &[f64], _: &[f64]| {
            vec![damage2_rate(j[1].max(f64::MIN_POSITIVE), j[3], j[2], &p).unwrap_or(0.0)]
        },
        vec![],
    )
}

/// Every 2D relation in the zoo, with their default parameters.
pub fn model_zoo_2d() -> Vec<ConstitutiveRelation> {
    let gp = GlenParams::default();
    let dp = DamageParams::default();
    vec![
        glen_cr(gp).expect("default Glen parameters are valid"),
        glen_cr(GlenParams { mu: 2.0, n: 1.0, eps_reg: 0.0 }).expect("valid"),
        damaged_glen_cr(gp, dp).expect("valid"),
        albrecht_levermann_cr(dp).expect("valid"),
        damage2_cr(Damage2Params {
            tau_0: 1.0,
            eps_0: 0.5,
            kappa: 2.0,
            mu: 1.0,
            n: 3.0,
        })
        .expect("valid"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn smoothed_rate_partials_and_limit() {
        let p = DamageParams::default();
        let sm = GuardSmoothing { fracture: 0.3, healing: 0.05 };
        for &(j2, phi) in &[(2.5, 0.05), (0.6, 0.02), (4.0, 0.2), (0.3, -0.01), (1.2, 0.4)] {
            let ((s, dj, dphi), g) = albrecht_levermann_smoothed(j2, phi, &p, &sm);
            let f = |a: f64, b: f64| albrecht_levermann_smoothed(a, b, &p, &sm).0 .0;
            let h = 1e-6;
            assert_relative_eq!(dj, (f(j2 + h, phi) - f(j2 - h, phi)) / (2.0 * h), epsilon = 1e-8, max_relative = 1e-6);
            assert_relative_eq!(dphi, (f(j2, phi + h) - f(j2, phi - h)) / (2.0 * h), epsilon = 1e-8, max_relative = 1e-6);
            assert_relative_eq!(s, p.gamma_f * g[0] + p.gamma_h * g[1], epsilon = 1e-15);
        }
        let exact = GuardSmoothing::default();
        for &(j2, phi) in &[(3.0, 0.0), (0.5, 0.2), (1.5, 0.3)] {
            assert_eq!(albrecht_levermann_smoothed(j2, phi, &p, &exact).0 .0, albrecht_levermann_rate(j2, phi, &p));
        }
    }

    fn assert_sym2_eq(a: Sym2, b: Sym2, tol: f64) {
        for k in 0..3 {
            assert_relative_eq!(a.0[k], b.0[k], epsilon = tol, max_relative = tol);
        }
    }

    #[test]
    fn glen_examples() {
        let p = GlenParams::default();
        assert_eq!(glen_stress(Sym2::zero(), &p), Sym2::zero());
        let lin = GlenParams { mu: 2.0, n: 1.0, eps_reg: 1e-12 };
        assert_sym2_eq(glen_stress(Sym2::diag(1.0, -1.0), &lin), Sym2::diag(2.0, -2.0), 1e-15);
        let cubic = GlenParams { mu: 1.0, n: 3.0, eps_reg: 0.0 };
        let expected = Sym2::diag(1.0, -1.0).scale(2f64.powf(-1.0 / 3.0));
        assert_sym2_eq(glen_stress(Sym2::diag(1.0, -1.0), &cubic), expected, 1e-15);
        assert_sym2_eq(glen_stress_wp(Sym2::diag(1.0, -1.0), &cubic).unwrap(), expected, 1e-15);
    }

    #[test]
    fn viscosity_derivative_matches_difference() {
        let p = GlenParams::default();
        for j2 in [0.1, 0.7, 2.5] {
            let h = 1e-6;
            let fd = (p.viscosity(j2 + h).0 - p.viscosity(j2 - h).0) / (2.0 * h);
            assert_relative_eq!(p.viscosity(j2).1, fd, max_relative = 1e-7);
        }
    }

    #[test]
    fn damaged_stress_examples() {
        let gp = GlenParams::default();
        let dp = DamageParams::default();
        let e = Sym2::new(0.4, -0.1, 0.3);
        assert_eq!(damaged_stress(e, 0.0, &gp, &dp).unwrap(), glen_stress(e, &gp));
        assert_sym2_eq(
            damaged_stress(e, 1.0, &gp, &dp).unwrap(),
            glen_stress(e, &gp).scale(0.001),
            1e-12,
        );
        let lin = GlenParams { mu: 2.0, n: 1.0, eps_reg: 1e-12 };
        assert_sym2_eq(
            damaged_stress(Sym2::identity(), 0.5, &lin, &dp).unwrap(),
            Sym2::identity().scale((1.0 - 0.4995) * 2.0),
            1e-14,
        );
        assert!(damaged_stress(e, 1.2, &gp, &dp).is_err());
        assert!(damaged_stress(e, -0.1, &gp, &dp).is_err());
    }

    #[test]
    fn damage_rate_examples() {
        let p = DamageParams::default();
        assert_eq!(albrecht_levermann_rate(0.5, 0.0, &p), 0.0);
        assert_relative_eq!(albrecht_levermann_rate(3.0, 0.0, &p), p.gamma_f * 3.0);
        assert_relative_eq!(albrecht_levermann_rate(0.5, 0.2, &p), -0.5 * p.gamma_h);
        // Dead zone between the healing and the damage-shifted fracture threshold.
        assert_eq!(albrecht_levermann_rate(1.5, 0.3, &p), 0.0);
        assert_eq!(albrecht_levermann_rate(2.0 / 0.7f64.powi(3) - 1e-9, 0.3, &p), 0.0);
    }

    #[test]
    fn damage_rate_partials_match_difference_off_thresholds() {
        let p = DamageParams::default();
        for (j2, phi) in [(3.0, 0.1), (0.4, 0.2), (5.0, 0.0)] {
            let (_, dj, dphi) = albrecht_levermann_partials(j2, phi, &p);
            let h = 1e-7;
            let fd_j = (albrecht_levermann_rate(j2 + h, phi, &p) - albrecht_levermann_rate(j2 - h, phi, &p)) / (2.0 * h);
            assert_relative_eq!(dj, fd_j, epsilon = 1e-7);
            if phi > 0.0 {
                let fd_p = (albrecht_levermann_rate(j2, phi + h, &p)
                    - albrecht_levermann_rate(j2, phi - h, &p))
                    / (2.0 * h);
                assert_relative_eq!(dphi, fd_p, epsilon = 1e-6);
            }
        }
    }

    fn estar() -> EstarParams {
        EstarParams {
            e_c: 1.0,
            e_s: 8.0,
            glen: GlenParams::default(),
        }
    }

    #[test]
    fn estar_matches_closed_form_shear_fraction() {
        // The deformational vorticity reduces to -2 u x (e u) / |u|^2, so the
        // shear plane normal is the part of e u orthogonal to u and the
        // remaining in-plane direction is u itself.
        let p = estar();
        let strain = Sym3::from_matrix([[0.3, 0.7, -0.2], [0.7, -0.1, 0.4], [-0.2, 0.4, -0.2]]);
        let u = [1.0, 0.5, -0.3];
        let omega = [0.2, -1.1, 0.6];
        let plane = estar_shear_plane(strain, omega, u).unwrap();
        let un = norm(u);
        let uhat = u.map(|v| v / un);
        let eu = strain.mul_vec(uhat);
        let perp = axpy(-dot(eu, uhat), uhat, eu);
        let n = perp.map(|v| v / norm(perp));
        for k in 0..3 {
            assert_relative_eq!(plane.normal[k].abs(), n[k].abs(), epsilon = 1e-12);
        }
        let expected_lambda = dot(uhat, strain.mul_vec(n)).abs() / strain.norm();
        assert_relative_eq!(plane.lambda_s, expected_lambda, epsilon = 1e-12);

        let tau = estar_stress(strain, omega, u, &p).unwrap();
        let (visc, _) = p.glen.viscosity(strain.norm());
        let expected = strain.scale(estar_enhancement(expected_lambda, &p).powf(1.0 / 3.0) * visc);
        for k in 0..6 {
            assert_relative_eq!(tau.0[k], expected.0[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn estar_compression_only_enhancement() {
        let p = estar();
        let strain = Sym3::from_matrix([[0.3, 0.7, -0.2], [0.7, -0.1, 0.4], [-0.2, 0.4, -0.2]]);
        let (visc, _) = p.glen.viscosity(strain.norm());
        let glen = strain.scale(visc);
        let e0 = estar_enhancement(0.0, &p).powf(1.0 / 3.0);
        assert_eq!(e0, p.e_c.powf(1.0 / 3.0));
        assert_eq!(glen.scale(e0), glen.scale(p.e_c.powf(1.0 / 3.0)));
    }

    #[test]
    fn estar_shear_limit_of_enhancement() {
        let p = estar();
        assert_eq!(estar_enhancement(1.0, &p), p.e_s);
        assert_eq!(estar_enhancement(0.0, &p), p.e_c);
    }

    #[test]
    fn estar_degenerate_inputs() {
        let p = estar();
        let s = Sym3::identity();
        assert!(matches!(
            estar_stress(s, [0.0, 0.0, 1.0], [0.0; 3], &p),
            Err(Error::DegenerateGeometry(_))
        ));
        // Vorticity parallel to the flow with no shear contribution.
        assert!(matches!(
            estar_stress(Sym3::zero(), [1.0, 0.0, 0.0], [1.0, 0.0, 0.0], &p),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn damage2_examples() {
        let p = Damage2Params {
            tau_0: 1.0,
            eps_0: 0.5,
            kappa: 2.0,
            mu: 1.0,
            n: 3.0,
        };
        assert_eq!(damage2_threshold_damage(p.eps_0, &p), 0.0);
        assert_eq!(damage2_rate(2.0, 0.0, 0.0, &p).unwrap(), 0.0);
        // Below the threshold stress the envelope is above the stress level.
        let j2 = 0.1;
        assert!(damage2_envelope(j2, &p) >= damage2_stress_level(j2, 0.0, &p));
        assert_eq!(damage2_rate(j2, 5.0, 0.0, &p).unwrap(), 0.0);
        // Above it the rate follows the threshold curve.
        let j2 = 2.0;
        assert!(damage2_envelope(j2, &p) < damage2_stress_level(j2, 0.0, &p));
        let r = damage2_rate(j2, 0.3, 0.0, &p).unwrap();
        assert_relative_eq!(r, 0.3 * damage2_threshold_slope(j2, &p));
        assert!(damage2_rate(0.0, 1.0, 0.0, &p).is_err());
    }

    #[test]
    fn damage2_slope_is_derivative_of_threshold() {
        let p = Damage2Params {
            tau_0: 1.0,
            eps_0: 0.5,
            kappa: 2.5,
            mu: 1.0,
            n: 3.0,
        };
        for j2 in [0.3, 0.5, 1.7, 4.0] {
            let h = 1e-6;
            let fd = (damage2_threshold_damage(j2 + h, &p) - damage2_threshold_damage(j2 - h, &p)) / (2.0 * h);
            assert_relative_eq!(damage2_threshold_slope(j2, &p), fd, max_relative = 1e-7);
        }
    }
}
