//! Product quadrature on balls and adaptive 1D quadrature.
//!
//! A [`Grid3D`] is Gauss–Legendre in the radius (with the `r²` Jacobian folded
//! into the weights) times a rule on the unit sphere. Sphere rules are either
//! small Lebedev rules (6, 14, 26, 38, 50 points, exact through degree 3, 5,
//! 7, 9, 11) or Gauss-product rules with `n` Gauss–Legendre nodes in `cos θ`
//! and `2n` equispaced azimuths (`2n²` points, exact through degree `2n − 1`).
//! A grid with `n_r` radial nodes integrates `p(|x|)·Y(x̂)` exactly when `p`
//! has degree ≤ `2n_r − 3` and `Y` is within the angular degree.

use crate::real::{Point3, Real};
use gauss_quad::GaussLegendre;
use std::num::NonZeroUsize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("unsupported angular order {0}; use a Lebedev size (6, 14, 26, 38, 50) or 2n² for n ≥ 2")]
    UnsupportedAngularOrder(usize),
    #[error("n_radial must be at least 2 (got {0})")]
    TooFewRadialNodes(usize),
    #[error("radius must be positive and finite (got {0})")]
    BadRadius(f64),
}

/// Sphere rule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AngularRule {
    Lebedev { points: usize },
    GaussProduct { n: usize },
}

const LEBEDEV_SIZES: [usize; 5] = [6, 14, 26, 38, 50];

impl AngularRule {
    /// Resolves a point count. Lebedev sizes take precedence; any other
    /// `2n²` count selects a Gauss-product rule.
    pub fn from_points(points: usize) -> Result<Self, QuadratureError> {
        if LEBEDEV_SIZES.contains(&points) {
            return Ok(Self::Lebedev { points });
        }
        if points.is_multiple_of(2) {
            let n = ((points / 2) as f64).sqrt().round() as usize;
            if n >= 2 && 2 * n * n == points {
                return Ok(Self::GaussProduct { n });
            }
        }
        Err(QuadratureError::UnsupportedAngularOrder(points))
    }

    pub fn points(&self) -> usize {
        match *self {
            Self::Lebedev { points } => points,
            Self::GaussProduct { n } => 2 * n * n,
        }
    }

    /// Highest total polynomial degree integrated exactly on the sphere.
    pub fn degree(&self) -> usize {
        match *self {
            Self::Lebedev { points } => match points {
                6 => 3,
                14 => 5,
                26 => 7,
                38 => 9,
                _ => 11,
            },
            Self::GaussProduct { n } => 2 * n - 1,
        }
    }

    /// The next rule up in accuracy.
    pub fn next(&self) -> Self {
        match *self {
            Self::Lebedev { points } => match LEBEDEV_SIZES.iter().position(|&p| p == points) {
                Some(i) if i + 1 < LEBEDEV_SIZES.len() => Self::Lebedev {
                    points: LEBEDEV_SIZES[i + 1],
                },
                _ => Self::GaussProduct { n: 7 },
            },
            Self::GaussProduct { n } => Self::GaussProduct { n: n + 1 },
        }
    }

    /// Unit-sphere nodes and weights; the weights sum to 4π.
    pub fn nodes_weights<T: Real>(&self) -> (Vec<Point3<T>>, Vec<T>) {
        let (pts, w) = match *self {
            Self::Lebedev { points } => lebedev(points),
            Self::GaussProduct { n } => gauss_product(n),
        };
        let four_pi = 4.0 * std::f64::consts::PI;
        (
            pts.iter().map(|p| p.map(T::lit)).collect(),
            w.iter().map(|&x| T::lit(x * four_pi)).collect(),
        )
    }
}

// Weights below are normalized to sum to one.
fn lebedev(points: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut p = Vec::with_capacity(points);
    let mut w = Vec::with_capacity(points);
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let s3 = 1.0 / 3f64.sqrt();
    let a1 = |wt: f64, p: &mut Vec<[f64; 3]>, w: &mut Vec<f64>| {
        for axis in 0..3 {
            for s in [1.0, -1.0] {
                let mut x = [0.0; 3];
                x[axis] = s;
                p.push(x);
                w.push(wt);
            }
        }
    };
    let a2 = |wt: f64, p: &mut Vec<[f64; 3]>, w: &mut Vec<f64>| {
        for zero in 0..3 {
            for s in [1.0, -1.0] {
                for t in [1.0, -1.0] {
                    let mut x = [s * s2, t * s2, 0.0];
                    x.rotate_right(zero + 1);
                    p.push(x);
                    w.push(wt);
                }
            }
        }
    };
    let a3 = |wt: f64, p: &mut Vec<[f64; 3]>, w: &mut Vec<f64>| {
        for s in [1.0, -1.0] {
            for t in [1.0, -1.0] {
                for u in [1.0, -1.0] {
                    p.push([s * s3, t * s3, u * s3]);
                    w.push(wt);
                }
            }
        }
    };
    // (±l, ±l, ±m) and its three placements of m.
    let bk = |wt: f64, l: f64, m: f64, p: &mut Vec<[f64; 3]>, w: &mut Vec<f64>| {
        for pos in 0..3 {
            for s in [1.0, -1.0] {
                for t in [1.0, -1.0] {
                    for u in [1.0, -1.0] {
                        let mut x = [s * l, t * l, u * l];
                        x[pos] = x[pos].signum() * m;
                        p.push(x);
                        w.push(wt);
                    }
                }
            }
        }
    };
    // (±p, ±q, 0) over all six orderings of the nonzero slots.
    let ck = |wt: f64, a: f64, b: f64, p: &mut Vec<[f64; 3]>, w: &mut Vec<f64>| {
        for (i, j) in [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)] {
            for s in [1.0, -1.0] {
                for t in [1.0, -1.0] {
                    let mut x = [0.0; 3];
                    x[i] = s * a;
                    x[j] = t * b;
                    p.push(x);
                    w.push(wt);
                }
            }
        }
    };
    match points {
        6 => a1(1.0 / 6.0, &mut p, &mut w),
        14 => {
            a1(1.0 / 15.0, &mut p, &mut w);
            a3(3.0 / 40.0, &mut p, &mut w);
        }
        26 => {
            a1(1.0 / 21.0, &mut p, &mut w);
            a2(4.0 / 105.0, &mut p, &mut w);
            a3(9.0 / 280.0, &mut p, &mut w);
        }
        38 => {
            a1(1.0 / 105.0, &mut p, &mut w);
            a3(9.0 / 280.0, &mut p, &mut w);
            ck(1.0 / 35.0, 0.459_700_843_380_983_1, 0.888_073_833_977_115_3, &mut p, &mut w);
        }
        50 => {
            a1(4.0 / 315.0, &mut p, &mut w);
            a2(64.0 / 2835.0, &mut p, &mut w);
            a3(27.0 / 1280.0, &mut p, &mut w);
            let l = 1.0 / 11f64.sqrt();
            bk(14641.0 / 725_760.0, l, 3.0 * l, &mut p, &mut w);
        }
        _ => unreachable!("size validated by AngularRule"),
    }
    (p, w)
}

fn gauss_product(n: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let gl = GaussLegendre::new(NonZeroUsize::new(n).expect("n ≥ 2"));
    let m = 2 * n;
    let mut p = Vec::with_capacity(n * m);
    let mut w = Vec::with_capacity(n * m);
    for &(c, wc) in gl.as_node_weight_pairs() {
        let s = (1.0 - c * c).max(0.0).sqrt();
        for k in 0..m {
            let phi = (k as f64 + 0.5) * 2.0 * std::f64::consts::PI / m as f64;
            p.push([s * phi.cos(), s * phi.sin(), c]);
            w.push(wc / (2.0 * m as f64));
        }
    }
    (p, w)
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre<T: Real>(n: usize, a: T, b: T) -> Vec<(T, T)> {
    let gl = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    let half = (b - a) / T::lit(2.0);
    let mid = (a + b) / T::lit(2.0);
    gl.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * T::lit(x), half * T::lit(w)))
        .collect()
}

/// Scheme descriptor of a [`Grid3D`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridScheme {
    pub n_radial: usize,
    pub angular: AngularRule,
    /// Each radial shell carries its own fixed rotation of the sphere rule.
    pub rotated_shells: bool,
}

/// Deterministic rotation for shell `i` (identity for `i = 0`), from an
/// additive low-discrepancy sequence over Euler angles.
fn shell_rotation(i: usize) -> [[f64; 3]; 3] {
    let frac = |x: f64| x - x.floor();
    let t = i as f64;
    let alpha = 2.0 * std::f64::consts::PI * frac(t * 0.754_877_666_246_692_7);
    let beta = (1.0 - 2.0 * frac(t * 0.569_840_290_998_053_2 + 0.5)).acos() * if i == 0 { 0.0 } else { 1.0 };
    let gamma = 2.0 * std::f64::consts::PI * frac(t * 0.618_033_988_749_894_9);
    let (ca, sa, cb, sb, cg, sg) = (alpha.cos(), alpha.sin(), beta.cos(), beta.sin(), gamma.cos(), gamma.sin());
    // R_z(α) R_y(β) R_z(γ)
    [
        [ca * cb * cg - sa * sg, -ca * cb * sg - sa * cg, ca * sb],
        [sa * cb * cg + ca * sg, -sa * cb * sg + ca * cg, sa * sb],
        [-sb * cg, sb * sg, cb],
    ]
}

/// Product quadrature over the ball `|x| ≤ radius`.
#[derive(Debug, Clone)]
pub struct Grid3D<T> {
    pub nodes: Vec<Point3<T>>,
    pub weights: Vec<T>,
    pub radius: T,
    pub scheme: GridScheme,
}

impl<T: Real> Grid3D<T> {
    pub fn new(radius: T, n_radial: usize, n_angular: usize) -> Result<Self, QuadratureError> {
        Self::with_rule(radius, n_radial, AngularRule::from_points(n_angular)?)
    }

    /// Product grid with rotated shells (see [`Grid3D::with_scheme`]).
    pub fn with_rule(
        radius: T,
        n_radial: usize,
        angular: AngularRule,
    ) -> Result<Self, QuadratureError> {
        Self::with_scheme(
            radius,
            GridScheme {
                n_radial,
                angular,
                rotated_shells: true,
            },
        )
    }

    /// Rotating the sphere rule from shell to shell keeps every exactness
    /// property and stops nodes from lining up along rays, which otherwise
    /// spoils the diagonal of singular-kernel Nyström matrices.
    pub fn with_scheme(radius: T, scheme: GridScheme) -> Result<Self, QuadratureError> {
        let GridScheme {
            n_radial,
            angular,
            rotated_shells,
        } = scheme;
        if n_radial < 2 {
            return Err(QuadratureError::TooFewRadialNodes(n_radial));
        }
        if !(radius > T::zero() && radius.is_finite()) {
            return Err(QuadratureError::BadRadius(radius.to_f64_lossy()));
        }
        let radial = gauss_legendre(n_radial, T::zero(), radius);
        let (dirs, dw) = angular.nodes_weights::<T>();
        let mut nodes = Vec::with_capacity(radial.len() * dirs.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        for (i, &(r, wr)) in radial.iter().enumerate() {
            let rot = shell_rotation(if rotated_shells { i } else { 0 }).map(|row| row.map(T::lit));
            for (d, &wa) in dirs.iter().zip(&dw) {
                let e = [0, 1, 2].map(|a| rot[a][0] * d[0] + rot[a][1] * d[1] + rot[a][2] * d[2]);
                nodes.push([e[0] * r, e[1] * r, e[2] * r]);
                weights.push(wr * r * r * wa);
            }
        }
        Ok(Self {
            nodes,
            weights,
            radius,
            scheme,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// The same scheme one step finer in both directions.
    pub fn refined(&self) -> Self {
        Self::with_scheme(
            self.radius,
            GridScheme {
                n_radial: 2 * self.scheme.n_radial,
                angular: self.scheme.angular.next(),
                rotated_shells: self.scheme.rotated_shells,
            },
        )
        .expect("refinement of a valid grid is valid")
    }

    pub fn integrate(&self, f: impl Fn(&Point3<T>) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, &w)| w * f(x))
            .sum()
    }

    /// Affine image `center + x/scale` with weights divided by `scale³`.
    pub fn mapped(&self, center: &Point3<T>, scale: T) -> (Vec<Point3<T>>, Vec<T>) {
        let s3 = scale * scale * scale;
        (
            self.nodes
                .iter()
                .map(|x| {
                    [
                        center[0] + x[0] / scale,
                        center[1] + x[1] / scale,
                        center[2] + x[2] / scale,
                    ]
                })
                .collect(),
            self.weights.iter().map(|&w| w / s3).collect(),
        )
    }
}

// Gauss–Kronrod 7-15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let c = (a + b) / T::lit(2.0);
    let h = (b - a) / T::lit(2.0);
    let fc = f(c);
    let mut k = fc * T::lit(WGK[7]);
    let mut g = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = h * T::lit(XGK[j]);
        let s = f(c - dx) + f(c + dx);
        k += T::lit(WGK[j]) * s;
        if j % 2 == 1 {
            g += T::lit(WG[j / 2]) * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss–Kronrod 7-15 quadrature on `[a, b]`.
///
/// Returns the integral and an error estimate. Subdivides the worst interval
/// until the summed estimate is below `max(abs_tol, rel_tol·|I|)` or
/// `max_intervals` is reached.
pub fn integrate_adaptive<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    abs_tol: T,
    rel_tol: T,
    max_intervals: usize,
) -> (T, T) {
    let mut pieces = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    loop {
        let total: T = pieces.iter().map(|p| p.2).sum();
        let err: T = pieces.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || pieces.len() >= max_intervals {
            return (total, err);
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |best, (i, p)| {
                if p.3 > best.1 {
                    (i, p.3)
                } else {
                    best
                }
            });
        let (lo, hi, _, _) = pieces.swap_remove(idx);
        let mid = (lo + hi) / T::lit(2.0);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
}
