//! Superpositions of Yukawa kernels and their exact `L²` geometry.
//!
//! A [`GreenField`] is `Σ_b c_b h_b + Σ_i q_i 𝒢^λ(·−y_i) + Σ_k w_k c_k 𝒢^λ(·−z_k)`.
//! Inner products of the kernel parts reduce to pairwise sums of
//! `K2(r) = e^{−√λ r}/(8π√λ)`, so no volumetric grid is ever needed.

use crate::greens::{k2_radial, yukawa_radial};
use crate::real::{dist3, CompensatedSum, Point3, Real};
use crate::source::SourceSpec;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("fields use different lambda ({0} vs {1})")]
    LambdaMismatch(f64, f64),
    #[error("manufactured base parts do not cancel")]
    UnequalBase,
}

/// One node of a charge cloud: contributes `weight·value·𝒢^λ(· − point)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudNode<T> {
    pub point: Point3<T>,
    pub weight: T,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreenField<T> {
    pub lambda: T,
    /// Manufactured parts with coefficients.
    pub base: Vec<(T, SourceSpec<T>)>,
    pub atoms: Vec<(Point3<T>, T)>,
    pub cloud: Vec<CloudNode<T>>,
}

impl<T: Real> GreenField<T> {
    pub fn empty(lambda: T) -> Self {
        Self {
            lambda,
            base: Vec::new(),
            atoms: Vec::new(),
            cloud: Vec::new(),
        }
    }

    pub fn from_source(src: &SourceSpec<T>) -> Self {
        let mut f = Self::empty(src.lambda);
        f.base.push((T::one(), *src));
        f
    }

    pub fn with_atoms(mut self, points: &[Point3<T>], charges: &[T]) -> Self {
        assert_eq!(points.len(), charges.len());
        self.atoms.extend(points.iter().copied().zip(charges.iter().copied()));
        self
    }

    pub fn with_cloud(mut self, nodes: impl IntoIterator<Item = CloudNode<T>>) -> Self {
        self.cloud.extend(nodes);
        self
    }

    /// Value at `x`; kernel terms sitting exactly at `x` are skipped.
    pub fn evaluate(&self, x: &Point3<T>) -> T {
        let kappa = self.lambda.sqrt();
        let mut acc = CompensatedSum::new();
        for (c, s) in &self.base {
            acc.add(*c * s.h(x));
        }
        for (y, q) in &self.atoms {
            let r = dist3(x, y);
            if r > T::zero() {
                acc.add(*q * yukawa_radial(r, kappa));
            }
        }
        for n in &self.cloud {
            let r = dist3(x, &n.point);
            if r > T::zero() {
                acc.add(n.weight * n.value * yukawa_radial(r, kappa));
            }
        }
        acc.value()
    }

    /// Total point-charge content `Σ q_i + Σ w_k c_k`.
    pub fn total_charge(&self) -> T {
        self.atoms.iter().map(|a| a.1).sum::<T>()
            + self.cloud.iter().map(|n| n.weight * n.value).sum::<T>()
    }

    fn scaled(&self, s: T) -> Self {
        Self {
            lambda: self.lambda,
            base: self.base.iter().map(|(c, b)| (*c * s, *b)).collect(),
            atoms: self.atoms.iter().map(|(p, q)| (*p, *q * s)).collect(),
            cloud: self
                .cloud
                .iter()
                .map(|n| CloudNode {
                    value: n.value * s,
                    ..*n
                })
                .collect(),
        }
    }

    /// `self + s·other`. Identical base specs and identical atom or cloud
    /// layouts are merged termwise, so `f − f` is exactly empty.
    pub fn axpy(&self, s: T, other: &Self) -> Result<Self, FieldError> {
        if self.lambda != other.lambda {
            return Err(FieldError::LambdaMismatch(
                self.lambda.to_f64_lossy(),
                other.lambda.to_f64_lossy(),
            ));
        }
        let o = other.scaled(s);
        let mut base = self.base.clone();
        for (c, spec) in o.base {
            match base.iter_mut().find(|(_, b)| *b == spec) {
                Some(entry) => entry.0 += c,
                None => base.push((c, spec)),
            }
        }
        base.retain(|(c, _)| *c != T::zero());
        let same_atoms = self.atoms.len() == o.atoms.len()
            && self.atoms.iter().zip(&o.atoms).all(|(a, b)| a.0 == b.0);
        let mut atoms: Vec<(Point3<T>, T)> = if same_atoms {
            self.atoms
                .iter()
                .zip(&o.atoms)
                .map(|(a, b)| (a.0, a.1 + b.1))
                .collect()
        } else {
            self.atoms.iter().chain(&o.atoms).copied().collect()
        };
        atoms.retain(|a| a.1 != T::zero());
        let same_cloud = self.cloud.len() == o.cloud.len()
            && self
                .cloud
                .iter()
                .zip(&o.cloud)
                .all(|(a, b)| a.point == b.point && a.weight == b.weight);
        let mut cloud: Vec<CloudNode<T>> = if same_cloud {
            self.cloud
                .iter()
                .zip(&o.cloud)
                .map(|(a, b)| CloudNode {
                    value: a.value + b.value,
                    ..*a
                })
                .collect()
        } else {
            self.cloud.iter().chain(&o.cloud).copied().collect()
        };
        cloud.retain(|n| n.value != T::zero() && n.weight != T::zero());
        Ok(Self {
            lambda: self.lambda,
            base,
            atoms,
            cloud,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, FieldError> {
        self.axpy(-T::one(), other)
    }

    /// Kernel parts as a flat list of point charges (cloud charge `w·c`).
    fn charges(&self) -> (Vec<(Point3<T>, T)>, Vec<(Point3<T>, T)>) {
        (
            self.atoms.clone(),
            self.cloud.iter().map(|n| (n.point, n.weight * n.value)).collect(),
        )
    }
}

/// `‖·‖₂` of a kernel-only field, split by source type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldDistance<T> {
    pub value: T,
    pub atom_atom: T,
    /// Cross term, already doubled.
    pub atom_cloud: T,
    pub cloud_cloud: T,
}

/// `Σ_{a∈A} Σ_{b∈B} c_a c_b K2(|z_a − z_b|)`, compensated and deterministic.
pub fn k2_bilinear<T: Real>(a: &[(Point3<T>, T)], b: &[(Point3<T>, T)], kappa: T) -> T {
    let rows: Vec<T> = a
        .par_iter()
        .map(|(za, ca)| {
            let mut acc = CompensatedSum::new();
            for (zb, cb) in b {
                acc.add(*cb * k2_radial(dist3(za, zb), kappa));
            }
            *ca * acc.value()
        })
        .collect();
    let mut acc = CompensatedSum::new();
    for r in rows {
        acc.add(r);
    }
    acc.value()
}

/// `Σ_a Σ_b c_a c_b K2` over one list, using symmetry.
pub fn k2_quadratic<T: Real>(a: &[(Point3<T>, T)], kappa: T) -> T {
    let n = a.len();
    let rows: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (zi, ci) = a[i];
            let mut acc = CompensatedSum::new();
            for (zj, cj) in &a[i + 1..] {
                acc.add(*cj * k2_radial(dist3(&zi, zj), kappa));
            }
            ci * (T::lit(2.0) * acc.value() + ci * k2_radial(T::zero(), kappa))
        })
        .collect();
    let mut acc = CompensatedSum::new();
    for r in rows {
        acc.add(r);
    }
    acc.value()
}

/// `L²` norm of a field with no manufactured part.
pub fn l2_norm<T: Real>(f: &GreenField<T>) -> Result<FieldDistance<T>, FieldError> {
    if !f.base.is_empty() {
        return Err(FieldError::UnequalBase);
    }
    let kappa = f.lambda.sqrt();
    let (atoms, cloud) = f.charges();
    let aa = k2_quadratic(&atoms, kappa);
    let cc = k2_quadratic(&cloud, kappa);
    let ac = T::lit(2.0) * k2_bilinear(&atoms, &cloud, kappa);
    let sq = aa + ac + cc;
    Ok(FieldDistance {
        value: sq.max(T::zero()).sqrt(),
        atom_atom: aa,
        atom_cloud: ac,
        cloud_cloud: cc,
    })
}

/// `‖A − B‖₂`; the manufactured parts must cancel.
pub fn l2_distance<T: Real>(a: &GreenField<T>, b: &GreenField<T>) -> Result<FieldDistance<T>, FieldError> {
    l2_norm(&a.sub(b)?)
}

/// `(g, F)` for a manufactured probe `g = (−Δ+λ)h_g` and any field `F`:
/// kernel parts contribute `h_g` at their centres, base parts the closed
/// form `∫ g h_b`.
pub fn probe_inner<T: Real>(probe: &SourceSpec<T>, f: &GreenField<T>) -> T {
    let mut acc = CompensatedSum::new();
    for (c, b) in &f.base {
        acc.add(*c * probe.f_dot_h(b));
    }
    for (y, q) in &f.atoms {
        acc.add(*q * probe.h(y));
    }
    for n in &f.cloud {
        acc.add(n.weight * n.value * probe.h(&n.point));
    }
    acc.value()
}

/// `‖Σ d_i 𝒢^λ(·−y_i)‖ ≤ √K2(0)·√N·‖d‖₂`.
pub fn atom_norm_bound<T: Real>(d: &[T], lambda: T) -> T {
    let n = T::from_usize_lossy(d.len());
    let norm = d.iter().map(|&x| x * x).sum::<T>().sqrt();
    k2_radial(T::zero(), lambda.sqrt()).sqrt() * n.sqrt() * norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::{resolvent_squared_kernel, resolvent_squared_quadrature};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn identical_fields_have_zero_distance() {
        let src = SourceSpec::new(1.0, [0.0; 3], 0.5, 4.0).unwrap();
        let f = GreenField::from_source(&src).with_atoms(&[[0.1, 0.2, 0.3], [0.0, 0.0, 1.0]], &[0.3, -1.0]);
        let d = l2_distance(&f, &f).unwrap();
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn single_atom_norm() {
        let lambda = 2.0f64;
        let f = GreenField::empty(lambda).with_atoms(&[[0.3, 0.0, 0.0]], &[-1.5]);
        let d = l2_norm(&f).unwrap();
        assert!((d.value - 1.5 / (8.0 * PI * lambda.sqrt()).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dipole_against_volumetric_oracle() {
        let dist = 0.8;
        let f = GreenField::empty(1.0f64).with_atoms(&[[0.0; 3], [dist, 0.0, 0.0]], &[1.0, -1.0]);
        let v2 = l2_norm(&f).unwrap().value.powi(2);
        let closed = 2.0 / (8.0 * PI) - 2.0 * (-dist).exp() / (8.0 * PI);
        assert!((v2 - closed).abs() < 1e-15);
        let oracle = 2.0 * resolvent_squared_quadrature(0.0, 1.0, 1e-9)
            - 2.0 * resolvent_squared_quadrature(dist, 1.0, 1e-9);
        assert!((v2 - oracle).abs() < 1e-4 * v2);
        assert!((resolvent_squared_kernel(0.0, 1.0).unwrap() * 2.0 - 2.0 / (8.0 * PI)).abs() < 1e-16);
    }

    #[test]
    fn unequal_bases_are_rejected() {
        let a = GreenField::from_source(&SourceSpec::new(1.0, [0.0; 3], 0.5, 4.0).unwrap());
        let b = GreenField::from_source(&SourceSpec::new(2.0, [0.0; 3], 0.5, 4.0).unwrap());
        assert_eq!(l2_distance(&a, &b), Err(FieldError::UnequalBase));
        assert!(matches!(
            l2_distance(&a, &GreenField::empty(5.0)),
            Err(FieldError::LambdaMismatch(..))
        ));
    }

    #[test]
    fn evaluation_is_linear() {
        let src = SourceSpec::new(1.0f64, [0.1; 3], 0.5, 4.0).unwrap();
        let pts = [[0.0, 0.0, 0.0], [0.5, 0.1, -0.2]];
        let f1 = GreenField::from_source(&src).with_atoms(&pts, &[0.2, 0.4]);
        let f2 = GreenField::from_source(&src).with_atoms(&pts, &[-0.7, 0.1]);
        let f12 = GreenField::from_source(&src).with_atoms(&pts, &[-0.5, 0.5]);
        let x = [0.3, 0.7, 0.2];
        let lhs = f12.evaluate(&x);
        let rhs = f1.evaluate(&x) + f2.evaluate(&x) - src.h(&x);
        assert!((lhs - rhs).abs() < 1e-15);
    }

    fn arb_field() -> impl Strategy<Value = GreenField<f64>> {
        let atoms = prop::collection::vec((prop::array::uniform3(-1.0f64..1.0), -2.0f64..2.0), 0..8);
        let cloud = prop::collection::vec(
            (prop::array::uniform3(-1.0f64..1.0), 0.01f64..0.2, -2.0f64..2.0),
            0..8,
        );
        (atoms, cloud).prop_map(|(a, c)| GreenField {
            lambda: 3.0,
            base: vec![],
            atoms: a,
            cloud: c
                .into_iter()
                .map(|(p, w, v)| CloudNode { point: p, weight: w, value: v })
                .collect(),
        })
    }

    proptest! {
        #[test]
        fn triangle_inequality(a in arb_field(), b in arb_field(), c in arb_field()) {
            let ab = l2_distance(&a, &b).unwrap().value;
            let bc = l2_distance(&b, &c).unwrap().value;
            let ac = l2_distance(&a, &c).unwrap().value;
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn squared_norm_is_quadratic(a in arb_field(), b in arb_field(), s in -3.0f64..3.0) {
            // Parallelogram law for the K2 Gram form.
            let n = |f: &GreenField<f64>| l2_norm(f).unwrap().value.powi(2);
            let sb = GreenField::empty(3.0).axpy(s, &b).unwrap();
            let plus = a.axpy(1.0, &sb).unwrap();
            let minus = a.axpy(-1.0, &sb).unwrap();
            let lhs = n(&plus) + n(&minus);
            let rhs = 2.0 * n(&a) + 2.0 * n(&sb);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs));
        }

        #[test]
        fn atom_bound_holds(d in prop::collection::vec(-1.0f64..1.0, 1..20), seed in 0u64..100) {
            let pts: Vec<[f64; 3]> = (0..d.len()).map(|i| {
                let t = (i as f64 + 1.0) * (seed as f64 + 1.3);
                [t.sin(), (1.7 * t).cos(), (0.3 * t).sin()]
            }).collect();
            let f = GreenField::empty(2.0).with_atoms(&pts, &d);
            prop_assert!(l2_norm(&f).unwrap().value <= atom_norm_bound(&d, 2.0) * (1.0 + 1e-12));
        }
    }
}
