//! Symmetric triangle rules (weights sum to one) and Gauss-Legendre on `[0, 1]`.

use crate::error::{contract, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleRule {
    pub degree: usize,
    /// Barycentric coordinates `(L₀, L₁, L₂)`.
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

fn orbit3(a: f64, w: f64, points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>) {
    let b = 1.0 - 2.0 * a;
    for p in [[b, a, a], [a, b, a], [a, a, b]] {
        points.push(p);
        weights.push(w);
    }
}

impl TriangleRule {
    pub fn new(degree: usize) -> Result<Self> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        match degree {
            1 => {
                points.push([1.0 / 3.0; 3]);
                weights.push(1.0);
            }
            2 => orbit3(1.0 / 6.0, 1.0 / 3.0, &mut points, &mut weights),
            3 | 4 => {
                orbit3(0.445_948_490_915_964_9, 0.223_381_589_678_011_47, &mut points, &mut weights);
                orbit3(0.091_576_213_509_770_74, 0.109_951_743_655_321_87, &mut points, &mut weights);
            }
            5 => {
                points.push([1.0 / 3.0; 3]);
                weights.push(0.225);
                orbit3(0.470_142_064_105_115_1, 0.132_394_152_788_506_18, &mut points, &mut weights);
                orbit3(0.101_286_507_323_456_34, 0.125_939_180_544_827_15, &mut points, &mut weights);
            }
            d => return Err(contract(format!("no triangle rule of degree {d}"))),
        }
        Ok(TriangleRule { degree, points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Three-point Gauss-Legendre on `[0, 1]`, exact to degree 5.
pub fn gauss3() -> [(f64, f64); 3] {
    let r = 0.5 * (0.6f64).sqrt();
    [(0.5 - r, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + r, 5.0 / 18.0)]
}
