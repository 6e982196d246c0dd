//! Tensor signatures, scalar/form invariants and Wineman-Pipkin evaluation.
//!
//! A frame-invariant tensor function is represented as `f(P) = Σ cᵢ(J(P)) Gᵢ(P)`
//! where `J` are rotation-invariant scalars of the inputs and `G` are
//! rotation-equivariant generators of the output space. Only the bases needed
//! here are tabulated: one symmetric second-order tensor (2D or 3D), optionally
//! followed by scalar state variables, mapped to either a symmetric
//! second-order tensor or a scalar.
//!
//! Invariant ordering is fixed: `tr A`, `√(tr A²)`, then `tr A³` in 3D, then
//! appended scalars in declaration order. Form invariants are `[I, A]` in 2D and
//! `[I, A, A²]` in 3D; a scalar output has the single generator `1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Symmetric 2x2 tensor stored as `[xx, yy, xy]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sym2(pub [f64; 3]);

/// Symmetric 3x3 tensor stored in Voigt order `[xx, yy, zz, yz, xz, xy]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sym3(pub [f64; 6]);

impl Sym2 {
    pub const fn new(xx: f64, yy: f64, xy: f64) -> Self {
        Sym2([xx, yy, xy])
    }

    pub const fn identity() -> Self {
        Sym2([1.0, 1.0, 0.0])
    }

    pub fn zero() -> Self {
        Sym2([0.0; 3])
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Sym2([a, b, 0.0])
    }

    pub fn from_matrix(m: [[f64; 2]; 2]) -> Self {
        Sym2([m[0][0], m[1][1], 0.5 * (m[0][1] + m[1][0])])
    }

    pub fn to_matrix(self) -> [[f64; 2]; 2] {
        let [xx, yy, xy] = self.0;
        [[xx, xy], [xy, yy]]
    }

    pub fn trace(self) -> f64 {
        self.0[0] + self.0[1]
    }

    /// Double contraction `A : B`.
    pub fn ddot(self, other: Sym2) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + 2.0 * self.0[2] * other.0[2]
    }

    /// Frobenius norm `√(A : A)`.
    pub fn norm(self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Sym2(self.0.map(|v| v * s))
    }

    pub fn add(self, other: Sym2) -> Self {
        Sym2([
            self.0[0] + other.0[0],
            self.0[1] + other.0[1],
            self.0[2] + other.0[2],
        ])
    }

    /// `Q A Qᵀ`.
    pub fn rotate(self, q: [[f64; 2]; 2]) -> Self {
        let a = self.to_matrix();
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..2 {
                    for l in 0..2 {
                        acc += q[i][k] * a[k][l] * q[j][l];
                    }
                }
                out[i][j] = acc;
            }
        }
        Sym2::from_matrix(out)
    }
}

impl Sym3 {
    pub fn identity() -> Self {
        Sym3([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn zero() -> Self {
        Sym3([0.0; 6])
    }

    pub fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        Sym3([
            m[0][0],
            m[1][1],
            m[2][2],
            0.5 * (m[1][2] + m[2][1]),
            0.5 * (m[0][2] + m[2][0]),
            0.5 * (m[0][1] + m[1][0]),
        ])
    }

    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let [xx, yy, zz, yz, xz, xy] = self.0;
        [[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]]
    }

    pub fn trace(self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn ddot(self, other: Sym3) -> f64 {
        let a = self.0;
        let b = other.0;
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + 2.0 * (a[3] * b[3] + a[4] * b[4] + a[5] * b[5])
    }

    pub fn norm(self) -> f64 {
        self.ddot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Sym3(self.0.map(|v| v * s))
    }

    pub fn add(self, other: Sym3) -> Self {
        let mut out = self.0;
        for (o, b) in out.iter_mut().zip(other.0) {
            *o += b;
        }
        Sym3(out)
    }

    pub fn square(self) -> Self {
        let a = self.to_matrix();
        Sym3::from_matrix(matmul3(a, a))
    }

    pub fn mul_vec(self, v: [f64; 3]) -> [f64; 3] {
        let a = self.to_matrix();
        [0, 1, 2].map(|i| a[i][0] * v[0] + a[i][1] * v[1] + a[i][2] * v[2])
    }

    pub fn rotate(self, q: [[f64; 3]; 3]) -> Self {
        let qt = transpose3(q);
        Sym3::from_matrix(matmul3(matmul3(q, self.to_matrix()), qt))
    }
}

pub(crate) fn matmul3(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub(crate) fn transpose3(a: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// Order, dimension and symmetry of a constitutive-relation input or output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSignature {
    pub order: u8,
    pub dim: u8,
    pub symmetric: bool,
}

impl TensorSignature {
    pub const fn scalar() -> Self {
        TensorSignature {
            order: 0,
            dim: 0,
            symmetric: true,
        }
    }

    pub const fn symmetric2(dim: u8) -> Self {
        TensorSignature {
            order: 2,
            dim,
            symmetric: true,
        }
    }

    /// Number of stored components.
    pub fn component_count(&self) -> usize {
        let d = self.dim as usize;
        match (self.order, self.symmetric) {
            (0, _) => 1,
            (1, _) => d,
            (2, true) => d * (d + 1) / 2,
            (2, false) => d * d,
            _ => d.pow(self.order as u32),
        }
    }
}

impl fmt::Display for TensorSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.order {
            0 => write!(f, "scalar"),
            o => write!(
                f,
                "{}order-{o} {}D tensor",
                if self.symmetric { "symmetric " } else { "" },
                self.dim
            ),
        }
    }
}

/// A concrete tensor value conforming to one of the supported signatures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tensor {
    Scalar(f64),
    Sym2(Sym2),
    Sym3(Sym3),
}

impl Tensor {
    pub fn signature(&self) -> TensorSignature {
        match self {
            Tensor::Scalar(_) => TensorSignature::scalar(),
            Tensor::Sym2(_) => TensorSignature::symmetric2(2),
            Tensor::Sym3(_) => TensorSignature::symmetric2(3),
        }
    }

    /// Frobenius norm (absolute value for scalars).
    pub fn norm(&self) -> f64 {
        match self {
            Tensor::Scalar(v) => v.abs(),
            Tensor::Sym2(t) => t.norm(),
            Tensor::Sym3(t) => t.norm(),
        }
    }

    pub fn as_sym2(&self) -> Option<Sym2> {
        match self {
            Tensor::Sym2(t) => Some(*t),
            _ => None,
        }
    }

    pub fn as_sym3(&self) -> Option<Sym3> {
        match self {
            Tensor::Sym3(t) => Some(*t),
            _ => None,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Tensor::Scalar(v) => Some(*v),
            _ => None,
        }
    }

    fn scaled_add(self, coeff: f64, other: Tensor) -> Tensor {
        match (self, other) {
            (Tensor::Scalar(a), Tensor::Scalar(b)) => Tensor::Scalar(a + coeff * b),
            (Tensor::Sym2(a), Tensor::Sym2(b)) => Tensor::Sym2(a.add(b.scale(coeff))),
            (Tensor::Sym3(a), Tensor::Sym3(b)) => Tensor::Sym3(a.add(b.scale(coeff))),
            _ => unreachable!("form invariants share the output signature"),
        }
    }

    fn zero_like(sig: TensorSignature) -> Tensor {
        match (sig.order, sig.dim) {
            (0, _) => Tensor::Scalar(0.0),
            (2, 2) => Tensor::Sym2(Sym2::zero()),
            _ => Tensor::Sym3(Sym3::zero()),
        }
    }
}

/// The tabulated invariant basis for a set of input signatures and an output signature.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantBasis {
    pub input_signatures: Vec<TensorSignature>,
    pub output_signature: TensorSignature,
    pub scalar_invariant_count: usize,
    pub form_invariant_count: usize,
}

impl InvariantBasis {
    /// Looks up the basis. Supported inputs: an optional leading symmetric
    /// second-order tensor (2D or 3D) followed by any number of scalars.
    /// Supported outputs: a symmetric second-order tensor of the input's
    /// dimension, or a scalar.
    pub fn lookup(inputs: &[TensorSignature], output: TensorSignature) -> Result<Self> {
        let (tensor_dim, scalars) = match inputs.split_first() {
            Some((first, rest)) if first.order == 2 => {
                if !first.symmetric || !(first.dim == 2 || first.dim == 3) {
                    return Err(contract(format!("unsupported input signature {first}")));
                }
                (Some(first.dim), rest)
            }
            _ => (None, inputs),
        };
        if let Some(bad) = scalars.iter().find(|s| s.order != 0) {
            return Err(contract(format!(
                "only scalars may follow the tensor input, found {bad}"
            )));
        }
        let tensor_scalars = match tensor_dim {
            Some(2) => 2,
            Some(3) => 3,
            _ => 0,
        };
        let form_invariant_count = match (output.order, tensor_dim) {
            (0, _) => 1,
            (2, Some(d)) if output.symmetric && output.dim == d => d as usize,
            _ => {
                return Err(contract(format!(
                    "no tabulated form invariants for output {output} with these inputs"
                )))
            }
        };
        Ok(InvariantBasis {
            input_signatures: inputs.to_vec(),
            output_signature: output,
            scalar_invariant_count: tensor_scalars + scalars.len(),
            form_invariant_count,
        })
    }

    fn check_inputs(&self, inputs: &[Tensor]) -> Result<()> {
        if inputs.len() != self.input_signatures.len() {
            return Err(contract(format!(
                "expected {} inputs, got {}",
                self.input_signatures.len(),
                inputs.len()
            )));
        }
        for (i, (t, sig)) in inputs.iter().zip(&self.input_signatures).enumerate() {
            if t.signature() != *sig {
                return Err(contract(format!(
                    "input {i} is a {}, declared {sig}",
                    t.signature()
                )));
            }
        }
        Ok(())
    }

    /// Scalar invariants `J` in the fixed tabulated order.
    pub fn scalar_invariants(&self, inputs: &[Tensor]) -> Result<Vec<f64>> {
        self.check_inputs(inputs)?;
        let mut out = Vec::with_capacity(self.scalar_invariant_count);
        for t in inputs {
            match t {
                Tensor::Sym2(a) => {
                    out.push(a.trace());
                    out.push(a.norm());
                }
                Tensor::Sym3(a) => {
                    out.push(a.trace());
                    out.push(a.norm());
                    let a2 = a.square();
                    out.push(a2.ddot(*a));
                }
                Tensor::Scalar(v) => out.push(*v),
            }
        }
        Ok(out)
    }

    /// Form invariants `G` in the fixed tabulated order.
    pub fn form_invariants(&self, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
        self.check_inputs(inputs)?;
        if self.output_signature.order == 0 {
            return Ok(vec![Tensor::Scalar(1.0)]);
        }
        Ok(match inputs[0] {
            Tensor::Sym2(a) => vec![Tensor::Sym2(Sym2::identity()), Tensor::Sym2(a)],
            Tensor::Sym3(a) => vec![
                Tensor::Sym3(Sym3::identity()),
                Tensor::Sym3(a),
                Tensor::Sym3(a.square()),
            ],
            Tensor::Scalar(_) => unreachable!("lookup guarantees a leading tensor"),
        })
    }
}

/// Maps scalar invariants and a parameter vector to form coefficients.
pub trait CoefficientFunction: Send + Sync {
    fn coefficients(&self, invariants: &[f64], params: &[f64]) -> Vec<f64>;
}

impl<F> CoefficientFunction for F
where
    F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync,
{
    fn coefficients(&self, invariants: &[f64], params: &[f64]) -> Vec<f64> {
        self(invariants, params)
    }
}

/// A frame-invariant constitutive relation in Wineman-Pipkin form.
#[derive(Clone)]
pub struct ConstitutiveRelation {
    pub name: String,
    pub basis: InvariantBasis,
    pub params: Vec<f64>,
    coefficients: Arc<dyn CoefficientFunction>,
}

impl fmt::Debug for ConstitutiveRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstitutiveRelation")
            .field("name", &self.name)
            .field("basis", &self.basis)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl ConstitutiveRelation {
    pub fn new(
        name: impl Into<String>,
        inputs: &[TensorSignature],
        output: TensorSignature,
        coefficients: impl CoefficientFunction + 'static,
        params: Vec<f64>,
    ) -> Result<Self> {
        Ok(ConstitutiveRelation {
            name: name.into(),
            basis: InvariantBasis::lookup(inputs, output)?,
            params,
            coefficients: Arc::new(coefficients),
        })
    }

    pub fn coefficients(&self, invariants: &[f64]) -> Vec<f64> {
        self.coefficients.coefficients(invariants, &self.params)
    }
}

pub fn scalar_invariants(cr: &ConstitutiveRelation, inputs: &[Tensor]) -> Result<Vec<f64>> {
    cr.basis.scalar_invariants(inputs)
}

pub fn form_invariants(cr: &ConstitutiveRelation, inputs: &[Tensor]) -> Result<Vec<Tensor>> {
    cr.basis.form_invariants(inputs)
}

/// Evaluates `Σ cᵢ(J) Gᵢ`.
pub fn wineman_pipkin_eval(cr: &ConstitutiveRelation, inputs: &[Tensor]) -> Result<Tensor> {
    let j = cr.basis.scalar_invariants(inputs)?;
    let g = cr.basis.form_invariants(inputs)?;
    let c = cr.coefficients(&j);
    if c.len() != g.len() {
        return Err(contract(format!(
            "{}: coefficient function returned {} values for {} form invariants",
            cr.name,
            c.len(),
            g.len()
        )));
    }
    Ok(c.iter()
        .zip(g)
        .fold(Tensor::zero_like(cr.basis.output_signature), |acc, (ci, gi)| {
            acc.scaled_add(*ci, gi)
        }))
}

/// Evaluates the relation on every input tuple, in order.
pub fn batch_eval(cr: &ConstitutiveRelation, batch: &[Vec<Tensor>]) -> Result<Vec<Tensor>> {
    batch.iter().map(|inputs| wineman_pipkin_eval(cr, inputs)).collect()
}

/// Rotation matrix for angle `theta` in the plane.
pub fn rotation2(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    [[c, -s], [s, c]]
}

/// Rotation matrix from a (not necessarily normalized) quaternion `[w, x, y, z]`.
pub fn rotation3_from_quaternion(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn rotate_vec3(q: [[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| q[i][0] * v[0] + q[i][1] * v[1] + q[i][2] * v[2])
}

/// Applies a rotation to a tensor value; scalars are unchanged.
pub fn rotate_tensor2(t: Tensor, q: [[f64; 2]; 2]) -> Tensor {
    match t {
        Tensor::Sym2(a) => Tensor::Sym2(a.rotate(q)),
        other => other,
    }
}

/// Relative defect `‖f(QXQᵀ) − Q f(X) Qᵀ‖ / max(‖f(QXQᵀ)‖, ‖Q f(X) Qᵀ‖)` of a
/// planar relation under the rotation `q` (zero when both sides vanish).
pub fn equivariance_defect2(cr: &ConstitutiveRelation, inputs: &[Tensor], q: [[f64; 2]; 2]) -> Result<f64> {
    let rotated: Vec<Tensor> = inputs.iter().map(|t| rotate_tensor2(*t, q)).collect();
    let a = wineman_pipkin_eval(cr, &rotated)?;
    let b = rotate_tensor2(wineman_pipkin_eval(cr, inputs)?, q);
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(a.scaled_add(-1.0, b).norm() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sym2_basis(output: TensorSignature) -> InvariantBasis {
        InvariantBasis::lookup(&[TensorSignature::symmetric2(2)], output).unwrap()
    }

    #[test]
    fn packed_component_counts() {
        assert_eq!(TensorSignature::symmetric2(2).component_count(), 3);
        assert_eq!(TensorSignature::symmetric2(3).component_count(), 6);
        assert_eq!(TensorSignature::scalar().component_count(), 1);
    }

    #[test]
    fn tabulated_counts() {
        let b2 = sym2_basis(TensorSignature::symmetric2(2));
        assert_eq!((b2.scalar_invariant_count, b2.form_invariant_count), (2, 2));
        let b3 = InvariantBasis::lookup(
            &[TensorSignature::symmetric2(3)],
            TensorSignature::symmetric2(3),
        )
        .unwrap();
        assert_eq!((b3.scalar_invariant_count, b3.form_invariant_count), (3, 3));
        let damage = InvariantBasis::lookup(
            &[TensorSignature::symmetric2(2), TensorSignature::scalar()],
            TensorSignature::scalar(),
        )
        .unwrap();
        assert_eq!((damage.scalar_invariant_count, damage.form_invariant_count), (3, 1));
    }

    #[test]
    fn scalar_invariant_examples() {
        let b = sym2_basis(TensorSignature::symmetric2(2));
        assert_eq!(b.scalar_invariants(&[Tensor::Sym2(Sym2::zero())]).unwrap(), vec![0.0, 0.0]);
        let j = b.scalar_invariants(&[Tensor::Sym2(Sym2::identity())]).unwrap();
        assert_eq!(j[0], 2.0);
        assert_relative_eq!(j[1], 2f64.sqrt(), epsilon = 1e-15);
        let j = b.scalar_invariants(&[Tensor::Sym2(Sym2::diag(1.0, -1.0))]).unwrap();
        assert_eq!(j[0], 0.0);
        assert_relative_eq!(j[1], 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn appended_scalars_follow_tensor_invariants() {
        let b = InvariantBasis::lookup(
            &[TensorSignature::symmetric2(2), TensorSignature::scalar()],
            TensorSignature::symmetric2(2),
        )
        .unwrap();
        let j = b
            .scalar_invariants(&[Tensor::Sym2(Sym2::diag(3.0, 4.0)), Tensor::Scalar(0.25)])
            .unwrap();
        assert_eq!(j, vec![7.0, 5.0, 0.25]);
    }

    #[test]
    fn form_invariant_examples() {
        let b = sym2_basis(TensorSignature::symmetric2(2));
        let a = Sym2::diag(1.0, -1.0);
        assert_eq!(
            b.form_invariants(&[Tensor::Sym2(a)]).unwrap(),
            vec![Tensor::Sym2(Sym2::identity()), Tensor::Sym2(a)]
        );
        let off = Sym2::new(0.0, 0.0, 1.0);
        assert_eq!(
            b.form_invariants(&[Tensor::Sym2(off)]).unwrap(),
            vec![Tensor::Sym2(Sym2::identity()), Tensor::Sym2(off)]
        );
        let b3 = InvariantBasis::lookup(
            &[TensorSignature::symmetric2(3)],
            TensorSignature::symmetric2(3),
        )
        .unwrap();
        let g = b3.form_invariants(&[Tensor::Sym3(Sym3::identity())]).unwrap();
        assert_eq!(g, vec![Tensor::Sym3(Sym3::identity()); 3]);
    }

    #[test]
    fn signature_mismatch_is_rejected() {
        let b = sym2_basis(TensorSignature::symmetric2(2));
        assert!(b.scalar_invariants(&[Tensor::Scalar(1.0)]).is_err());
        assert!(b.form_invariants(&[Tensor::Sym3(Sym3::identity())]).is_err());
        assert!(b.scalar_invariants(&[]).is_err());
    }

    #[test]
    fn wineman_pipkin_constant_coefficients() {
        let zero = ConstitutiveRelation::new(
            "zero",
            &[TensorSignature::symmetric2(2)],
            TensorSignature::symmetric2(2),
            |_: &[f64], _: &[f64]| vec![0.0, 0.0],
            vec![],
        )
        .unwrap();
        let a = Tensor::Sym2(Sym2::new(0.3, -1.2, 0.7));
        assert_eq!(wineman_pipkin_eval(&zero, &[a]).unwrap(), Tensor::Sym2(Sym2::zero()));

        let iso = ConstitutiveRelation::new(
            "identity",
            &[TensorSignature::symmetric2(2)],
            TensorSignature::symmetric2(2),
            |_: &[f64], _: &[f64]| vec![1.0, 0.0],
            vec![],
        )
        .unwrap();
        assert_eq!(wineman_pipkin_eval(&iso, &[a]).unwrap(), Tensor::Sym2(Sym2::identity()));
    }

    #[test]
    fn coefficient_count_mismatch() {
        let bad = ConstitutiveRelation::new(
            "bad",
            &[TensorSignature::symmetric2(2)],
            TensorSignature::symmetric2(2),
            |_: &[f64], _: &[f64]| vec![1.0],
            vec![],
        )
        .unwrap();
        assert!(wineman_pipkin_eval(&bad, &[Tensor::Sym2(Sym2::identity())]).is_err());
    }

    #[test]
    fn batch_matches_scalar_path() {
        let cr = ConstitutiveRelation::new(
            "quadratic",
            &[TensorSignature::symmetric2(2)],
            TensorSignature::symmetric2(2),
            |j: &[f64], p: &[f64]| vec![p[0] * j[0], (1.0 + j[1] * j[1]).ln()],
            vec![0.5],
        )
        .unwrap();
        assert!(batch_eval(&cr, &[]).unwrap().is_empty());
        let batch: Vec<Vec<Tensor>> = (0..100)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![Tensor::Sym2(Sym2::new(t.sin(), (1.3 * t).cos(), 0.2 * t - 3.0))]
            })
            .collect();
        let out = batch_eval(&cr, &batch).unwrap();
        for (inputs, o) in batch.iter().zip(&out) {
            assert_eq!(*o, wineman_pipkin_eval(&cr, inputs).unwrap());
        }
    }

    #[test]
    fn rotation_3d_is_orthonormal() {
        let q = rotation3_from_quaternion([0.3, -0.2, 0.9, 0.1]);
        let qqt = matmul3(q, transpose3(q));
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(qqt[i][j], e, epsilon = 1e-14);
            }
        }
    }
}
