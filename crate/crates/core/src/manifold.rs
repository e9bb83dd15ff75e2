//! Chart-based model metrics with analytic derivatives, Christoffel symbols,
//! and the Riemann curvature tensor.
//!
//! Every shipped model is conformally flat in its chart, `g = e^{2φ} δ`, and
//! supplies `φ` with hand-coded first and second derivatives. Christoffel
//! symbols and curvature are then assembled by the general formulas from
//! `g`, `∂g`, `∂²g`, so the assembly does not rely on conformality.
//!
//! Curvature convention: `ℛ(X,Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y]` and the
//! four-tensor is `R(X,Y,W,Z) = ⟨ℛ(X,Y)W, Z⟩`. As an endomorphism of `Λ²`,
//! `⟨ℛ(X∧Y), W∧Z⟩ = R(X,Y,W,Z)`, which is the identity in constant
//! curvature −1.

use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::jets::Real;
use crate::linalg::{cholesky, lower_inverse, Mat};

/// Hyperbolic ball chart points must satisfy `|x| < 1 − BALL_MARGIN`.
pub const BALL_MARGIN: f64 = 0.01;
/// Radius of the ball used for random sampling on hyperbolic models.
pub const BALL_SAMPLING_RADIUS: f64 = 0.9;
/// Sphere flows switch to the opposite stereographic chart once `|x|` exceeds this.
pub const SPHERE_RECHART_RADIUS: f64 = 1.0;
/// Sphere evaluators reject chart points with `|x|` above this radius.
pub const SPHERE_CHART_LIMIT: f64 = 2.0;
/// Largest admissible perturbation amplitude for [`ModelKind::PerturbedHyperbolic`].
pub const MAX_EPSILON: f64 = 0.1;
pub const DEFAULT_FREQUENCY: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    FlatTorus,
    RoundSphere,
    HyperbolicBall,
    PerturbedHyperbolic,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::FlatTorus => "flat_torus",
            ModelKind::RoundSphere => "round_sphere",
            ModelKind::HyperbolicBall => "hyperbolic_ball",
            ModelKind::PerturbedHyperbolic => "perturbed_hyperbolic",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat_torus" | "torus" => Ok(ModelKind::FlatTorus),
            "round_sphere" | "sphere" => Ok(ModelKind::RoundSphere),
            "hyperbolic_ball" | "hyperbolic" => Ok(ModelKind::HyperbolicBall),
            "perturbed_hyperbolic" | "perturbed" => Ok(ModelKind::PerturbedHyperbolic),
            other => Err(GeometryError::InvalidModel(format!(
                "unknown model kind `{other}`"
            ))),
        }
    }
}

/// Model-specific parameters; unset entries take documented defaults
/// (periods 2π, radius 1, ε = 0, frequency [`DEFAULT_FREQUENCY`]).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricModel {
    pub kind: ModelKind,
    pub dim: usize,
    #[serde(default)]
    pub params: ModelParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartPoint {
    pub chart: u8,
    pub coords: Vec<f64>,
}

impl ChartPoint {
    pub fn new(chart: u8, coords: Vec<f64>) -> Self {
        ChartPoint { chart, coords }
    }

    pub fn origin(n: usize) -> Self {
        ChartPoint::new(0, vec![0.0; n])
    }

    pub fn norm(&self) -> f64 {
        self.coords.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Metric value and analytic coordinate derivatives at a chart point.
#[derive(Clone, Debug)]
pub struct MetricJet<T> {
    pub g: Mat<T>,
    /// `dg[k] = ∂_k g`.
    pub dg: Vec<Mat<T>>,
    /// `ddg[k][l] = ∂_k ∂_l g`; empty unless second derivatives were requested.
    pub ddg: Vec<Vec<Mat<T>>>,
}

/// Christoffel symbols `Γ^k_{ij}` stored densely.
#[derive(Clone, Debug)]
pub struct Christoffel<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Christoffel<T> {
    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> T {
        self.data[(k * self.n + i) * self.n + j]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The matrix `Γ(Z)` with `Γ(Z)^k_j = Σ_i Z^i Γ^k_{ij}`.
    pub fn contract(&self, z: &[T]) -> Mat<T> {
        let n = self.n;
        Mat::from_fn(n, n, |k, j| {
            let mut acc = T::zero();
            for (i, &zi) in z.iter().enumerate() {
                acc += zi * self.get(k, i, j);
            }
            acc
        })
    }
}

/// Symmetric form of `ℛ` on `Λ²T_xM` in the orthonormal basis
/// `(E_a ∧ E_b)_{a<b}` built from the reference frame.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureEndomorphism {
    pub pairs: Vec<(usize, usize)>,
    pub values: Mat<f64>,
}

/// Riemann tensor at a point.
#[derive(Clone, Debug)]
pub struct Curvature {
    n: usize,
    /// `R^l_{ijk}`, with `ℛ(∂_i,∂_j)∂_k = R^l_{ijk} ∂_l`.
    up: Vec<f64>,
    /// `R_{ijkl} = g(ℛ(∂_i,∂_j)∂_k, ∂_l)`.
    low: Vec<f64>,
    pub endomorphism: CurvatureEndomorphism,
}

impl Curvature {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `R^l_{ijk}`.
    pub fn up(&self, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let n = self.n;
        self.up[((l * n + i) * n + j) * n + k]
    }

    /// `R_{ijkl}`.
    pub fn low(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        self.low[((i * n + j) * n + k) * n + l]
    }

    /// `R(X, Y, W, Z)` for chart-component vectors.
    pub fn eval(&self, x: &[f64], y: &[f64], w: &[f64], z: &[f64]) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let xy = x[i] * y[j];
                if xy == 0.0 {
                    continue;
                }
                for k in 0..n {
                    for l in 0..n {
                        acc += self.low(i, j, k, l) * xy * w[k] * z[l];
                    }
                }
            }
        }
        acc
    }

    /// Worst violation of pair antisymmetry, pair symmetry and first Bianchi.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let r = self.low(i, j, k, l);
                        worst = worst
                            .max((r + self.low(j, i, k, l)).abs())
                            .max((r + self.low(i, j, l, k)).abs())
                            .max((r - self.low(k, l, i, j)).abs())
                            .max((r + self.low(j, k, i, l) + self.low(k, i, j, l)).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Ordered basis pairs `(i, j)`, `i < j`, of `Λ²ℝⁿ`.
pub fn basis_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            v.push((i, j));
        }
    }
    v
}

pub(crate) struct Conformal<T> {
    pub phi: T,
    pub dphi: Vec<T>,
    pub ddphi: Option<Mat<T>>,
}

impl MetricModel {
    pub fn new(kind: ModelKind, dim: usize, params: ModelParams) -> Result<Self> {
        let m = MetricModel { kind, dim, params };
        m.validate()?;
        Ok(m)
    }

    pub fn flat_torus(dim: usize) -> Self {
        MetricModel {
            kind: ModelKind::FlatTorus,
            dim,
            params: ModelParams::default(),
        }
    }

    pub fn round_sphere(dim: usize, radius: f64) -> Self {
        MetricModel {
            kind: ModelKind::RoundSphere,
            dim,
            params: ModelParams {
                radius: Some(radius),
                ..Default::default()
            },
        }
    }

    pub fn hyperbolic_ball(dim: usize) -> Self {
        MetricModel {
            kind: ModelKind::HyperbolicBall,
            dim,
            params: ModelParams::default(),
        }
    }

    pub fn perturbed_hyperbolic(dim: usize, epsilon: f64) -> Self {
        MetricModel {
            kind: ModelKind::PerturbedHyperbolic,
            dim,
            params: ModelParams {
                epsilon: Some(epsilon),
                ..Default::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GeometryError::InvalidModel(m));
        if self.dim < 2 {
            return bad(format!("dim must be at least 2 (got {})", self.dim));
        }
        if let Some(p) = &self.params.periods {
            if p.len() != self.dim || p.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
                return bad("periods must be `dim` positive finite values".into());
            }
        }
        if let Some(r) = self.params.radius {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("radius must be positive (got {r})"));
            }
        }
        if let Some(e) = self.params.epsilon {
            if !(e.abs() <= MAX_EPSILON) {
                return bad(format!("|epsilon| must not exceed {MAX_EPSILON} (got {e})"));
            }
        }
        if let Some(f) = self.params.frequency {
            if !f.is_finite() {
                return bad("frequency must be finite".into());
            }
        }
        Ok(())
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.kind, ModelKind::FlatTorus | ModelKind::RoundSphere)
    }

    pub fn is_flat(&self) -> bool {
        self.kind == ModelKind::FlatTorus
    }

    pub fn num_charts(&self) -> u8 {
        if self.kind == ModelKind::RoundSphere {
            2
        } else {
            1
        }
    }

    pub fn periods(&self) -> Vec<f64> {
        self.params
            .periods
            .clone()
            .unwrap_or_else(|| vec![std::f64::consts::TAU; self.dim])
    }

    pub fn radius(&self) -> f64 {
        self.params.radius.unwrap_or(1.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.params.epsilon.unwrap_or(0.0)
    }

    /// Wave vector `k` of the perturbation `cos(k·x)`: `frequency/√n · (1, …, 1)`.
    pub fn wave(&self) -> Vec<f64> {
        let f = self.params.frequency.unwrap_or(DEFAULT_FREQUENCY);
        vec![f / (self.dim as f64).sqrt(); self.dim]
    }

    /// Short human-readable label, e.g. `round_sphere(2)`.
    pub fn label(&self) -> String {
        format!("{}({})", self.kind.name(), self.dim)
    }

    pub fn check_domain<T: Real>(&self, chart: u8, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(GeometryError::Domain(format!(
                "expected {} coordinates, got {}",
                self.dim,
                x.len()
            )));
        }
        if chart >= self.num_charts() {
            return Err(GeometryError::Domain(format!(
                "chart {chart} does not exist on {}",
                self.label()
            )));
        }
        let r2: f64 = x.iter().map(|v| v.value() * v.value()).sum();
        if !r2.is_finite() {
            return Err(GeometryError::Domain("non-finite chart coordinates".into()));
        }
        let limit = match self.kind {
            ModelKind::FlatTorus => return Ok(()),
            ModelKind::RoundSphere => SPHERE_CHART_LIMIT,
            ModelKind::HyperbolicBall | ModelKind::PerturbedHyperbolic => 1.0 - BALL_MARGIN,
        };
        let r = r2.sqrt();
        let inside = match self.kind {
            ModelKind::RoundSphere => r <= limit,
            _ => r < limit,
        };
        if inside {
            Ok(())
        } else {
            Err(GeometryError::Domain(format!(
                "|x| = {r:.6} outside the chart radius {limit} of {}",
                self.label()
            )))
        }
    }

    pub(crate) fn conformal<T: Real>(&self, x: &[T], second: bool) -> Conformal<T> {
        let n = self.dim;
        let s = x.iter().fold(T::zero(), |acc, &v| acc + v * v);
        match self.kind {
            ModelKind::FlatTorus => Conformal {
                phi: T::zero(),
                dphi: vec![T::zero(); n],
                ddphi: second.then(|| Mat::zeros(n, n)),
            },
            ModelKind::RoundSphere => {
                // φ = ln(2r) − ln(1 + |x|²)
                let q = s + 1.0;
                let qi = q.recip();
                Conformal {
                    phi: -q.ln() + (2.0 * self.radius()).ln(),
                    dphi: x.iter().map(|&v| v * qi * -2.0).collect(),
                    ddphi: second.then(|| {
                        Mat::from_fn(n, n, |i, j| {
                            let d = if i == j { qi * -2.0 } else { T::zero() };
                            d + x[i] * x[j] * qi * qi * 4.0
                        })
                    }),
                }
            }
            ModelKind::HyperbolicBall | ModelKind::PerturbedHyperbolic => {
                // φ = ln 2 − ln(1 − |x|²)
                let q = -s + 1.0;
                let qi = q.recip();
                let mut c = Conformal {
                    phi: -q.ln() + std::f64::consts::LN_2,
                    dphi: x.iter().map(|&v| v * qi * 2.0).collect(),
                    ddphi: second.then(|| {
                        Mat::from_fn(n, n, |i, j| {
                            let d = if i == j { qi * 2.0 } else { T::zero() };
                            d + x[i] * x[j] * qi * qi * 4.0
                        })
                    }),
                };
                let eps = self.epsilon();
                if self.kind == ModelKind::PerturbedHyperbolic && eps != 0.0 {
                    // g = h · g_hyp with h = 1 + ε cos(k·x) (1 − |x|²); φ += ½ ln h
                    let k = self.wave();
                    let kx = x
                        .iter()
                        .zip(&k)
                        .fold(T::zero(), |acc, (&v, &ki)| acc + v * ki);
                    let (cs, sn) = (kx.cos(), kx.sin());
                    let h = cs * q * eps + 1.0;
                    let hi = h.recip();
                    let dh: Vec<T> = (0..n)
                        .map(|i| (sn * q * k[i] + cs * x[i] * 2.0) * -eps)
                        .collect();
                    c.phi += h.ln() * 0.5;
                    for i in 0..n {
                        c.dphi[i] += dh[i] * hi * 0.5;
                    }
                    if let Some(dd) = c.ddphi.as_mut() {
                        for i in 0..n {
                            for j in 0..n {
                                let mut hij =
                                    -(cs * q * (k[i] * k[j])) + sn * (x[j] * k[i] + x[i] * k[j]) * 2.0;
                                if i == j {
                                    hij -= cs * 2.0;
                                }
                                let hij = hij * eps;
                                dd[(i, j)] += (hij * hi - dh[i] * dh[j] * hi * hi) * 0.5;
                            }
                        }
                    }
                }
                c
            }
        }
    }

    /// Metric with analytic derivatives, generic over the scalar type.
    /// Domain checks are the caller's responsibility.
    pub fn metric_jet<T: Real>(&self, x: &[T], second: bool) -> MetricJet<T> {
        let n = self.dim;
        let c = self.conformal(x, second);
        let e2 = (c.phi * 2.0).exp();
        let diag = |s: T| Mat::from_fn(n, n, |i, j| if i == j { s } else { T::zero() });
        let g = diag(e2);
        let dg = c.dphi.iter().map(|&d| diag(d * e2 * 2.0)).collect();
        let ddg = match &c.ddphi {
            Some(dd) => (0..n)
                .map(|k| {
                    (0..n)
                        .map(|l| diag((c.dphi[k] * c.dphi[l] * 4.0 + dd[(k, l)] * 2.0) * e2))
                        .collect()
                })
                .collect(),
            None => Vec::new(),
        };
        MetricJet { g, dg, ddg }
    }

    pub fn metric_at(&self, x: &ChartPoint) -> Result<Mat<f64>> {
        self.check_domain(x.chart, &x.coords)?;
        Ok(self.metric_jet(&x.coords, false).g)
    }

    pub fn metric_derivatives_at(&self, x: &ChartPoint) -> Result<MetricJet<f64>> {
        self.check_domain(x.chart, &x.coords)?;
        Ok(self.metric_jet(&x.coords, true))
    }

    pub fn christoffel_at(&self, x: &ChartPoint) -> Result<Christoffel<f64>> {
        self.check_domain(x.chart, &x.coords)?;
        let mj = self.metric_jet(&x.coords, false);
        let ginv = inverse_spd(&mj.g);
        Ok(christoffel_from(&mj, &ginv))
    }

    pub fn riemann_at(&self, x: &ChartPoint) -> Result<Curvature> {
        self.check_domain(x.chart, &x.coords)?;
        let n = self.dim;
        let (up, low) = riemann_generic(self, &x.coords);
        let e = self.reference_frame_generic(&x.coords);
        let pairs = basis_pairs(n);
        let hat = frame_components(&low, &e, n);
        let values = Mat::from_fn(pairs.len(), pairs.len(), |p, q| {
            let (a, b) = pairs[p];
            let (c, d) = pairs[q];
            hat[((a * n + b) * n + c) * n + d]
        });
        Ok(Curvature {
            n,
            up,
            low,
            endomorphism: CurvatureEndomorphism { pairs, values },
        })
    }

    /// Sectional curvature of the plane spanned by chart vectors `u`, `v`.
    pub fn sectional_curvature(&self, x: &ChartPoint, u: &[f64], v: &[f64]) -> Result<f64> {
        let g = self.metric_at(x)?;
        let ip = |a: &[f64], b: &[f64]| {
            let gb = g.mat_vec(b);
            a.iter().zip(&gb).map(|(p, q)| p * q).sum::<f64>()
        };
        let (uu, vv, uv) = (ip(u, u), ip(v, v), ip(u, v));
        let area2 = uu * vv - uv * uv;
        if !(area2 >= 1e-12 * uu * vv) || uu == 0.0 || vv == 0.0 {
            return Err(GeometryError::DegenerateInput(
                "tangent vectors do not span a plane".into(),
            ));
        }
        let curv = self.riemann_at(x)?;
        Ok(curv.eval(u, v, v, u) / area2)
    }

    /// Reference orthonormal frame `E(x) = L^{-T}` where `g = L Lᵀ`: Gram–Schmidt
    /// of the coordinate basis in index order. Columns are the frame vectors.
    pub fn reference_frame_generic<T: Real>(&self, x: &[T]) -> Mat<T> {
        if self.is_flat() {
            return Mat::identity(self.dim);
        }
        let g = self.metric_jet(x, false).g;
        lower_inverse(&cholesky(&g)).transpose()
    }

    /// Unit-sphere embedding of a stereographic chart point and its Jacobian
    /// (`(n+1) × n`). Chart 0 projects from the south pole; chart 1 from the
    /// north pole with the first coordinate reflected so both charts induce
    /// the same orientation.
    pub fn sphere_embedding<T: Real>(&self, chart: u8, x: &[T]) -> (Vec<T>, Mat<T>) {
        let n = x.len();
        let s = x.iter().fold(T::zero(), |acc, &v| acc + v * v);
        let qi = (s + 1.0).recip();
        let refl = |i: usize| if chart == 1 && i == 0 { -1.0 } else { 1.0 };
        let mut p: Vec<T> = (0..n).map(|i| x[i] * qi * (2.0 * refl(i))).collect();
        let last_sign = if chart == 0 { 1.0 } else { -1.0 };
        p.push((-s + 1.0) * qi * last_sign);
        let jac = Mat::from_fn(n + 1, n, |i, j| {
            if i < n {
                let d = if i == j { qi * 2.0 } else { T::zero() };
                (d - x[i] * x[j] * qi * qi * 4.0) * refl(i)
            } else {
                x[j] * qi * qi * (-4.0 * last_sign)
            }
        });
        (p, jac)
    }

    /// Stereographic coordinates of a unit vector `p ∈ Sⁿ` in the given chart.
    pub fn sphere_project(&self, chart: u8, p: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let last = p[n];
        (0..n)
            .map(|i| {
                if chart == 0 {
                    p[i] / (1.0 + last)
                } else {
                    let r = if i == 0 { -1.0 } else { 1.0 };
                    r * p[i] / (1.0 - last)
                }
            })
            .collect()
    }

    /// Chart transition on the sphere: coordinates of `x` in the other chart
    /// and the Jacobian `∂y/∂x`. Both directions are `y = R x / |x|²` with
    /// `R` the reflection of the first coordinate.
    pub fn sphere_transition(&self, x: &ChartPoint) -> Result<(ChartPoint, Mat<f64>)> {
        if self.kind != ModelKind::RoundSphere {
            return Err(GeometryError::UnsupportedModel(format!(
                "{} has a single chart",
                self.label()
            )));
        }
        let s: f64 = x.coords.iter().map(|v| v * v).sum();
        if s < 1e-300 {
            return Err(GeometryError::Domain(
                "chart origin has no image in the opposite chart".into(),
            ));
        }
        let n = self.dim;
        let r = |i: usize| if i == 0 { -1.0 } else { 1.0 };
        let y = (0..n).map(|i| r(i) * x.coords[i] / s).collect();
        let jac = Mat::from_fn(n, n, |i, j| {
            let d = if i == j { 1.0 / s } else { 0.0 };
            r(i) * (d - 2.0 * x.coords[i] * x.coords[j] / (s * s))
        });
        Ok((ChartPoint::new(1 - x.chart, y), jac))
    }
}

/// `g⁻¹` via Cholesky.
pub(crate) fn inverse_spd<T: Real>(g: &Mat<T>) -> Mat<T> {
    let li = lower_inverse(&cholesky(g));
    li.transpose().matmul(&li)
}

pub(crate) fn christoffel_from<T: Real>(mj: &MetricJet<T>, ginv: &Mat<T>) -> Christoffel<T> {
    let n = mj.g.rows();
    // lowered symbols Γ_{l,ij} = ½(∂_i g_lj + ∂_j g_li − ∂_l g_ij)
    let mut lowered = vec![T::zero(); n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                lowered[(l * n + i) * n + j] =
                    (mj.dg[i][(l, j)] + mj.dg[j][(l, i)] - mj.dg[l][(i, j)]) * 0.5;
            }
        }
    }
    let mut data = vec![T::zero(); n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let mut acc = T::zero();
                for l in 0..n {
                    acc += ginv[(k, l)] * lowered[(l * n + i) * n + j];
                }
                data[(k * n + i) * n + j] = acc;
            }
        }
    }
    Christoffel { n, data }
}

/// `(R^l_{ijk}, R_{ijkl})` assembled from `g`, `∂g`, `∂²g`.
pub(crate) fn riemann_generic<T: Real>(model: &MetricModel, x: &[T]) -> (Vec<T>, Vec<T>) {
    let n = model.dim;
    let mj = model.metric_jet(x, true);
    let ginv = inverse_spd(&mj.g);
    let gamma = christoffel_from(&mj, &ginv);
    let dginv: Vec<Mat<T>> = (0..n)
        .map(|m| ginv.matmul(&mj.dg[m]).matmul(&ginv).scale(T::cst(-1.0)))
        .collect();
    // ∂_m Γ^k_{ij}
    let idx3 = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
    let mut dgamma = vec![T::zero(); n * n * n * n];
    for m in 0..n {
        for i in 0..n {
            for j in 0..n {
                let s: Vec<T> = (0..n)
                    .map(|l| mj.dg[i][(l, j)] + mj.dg[j][(l, i)] - mj.dg[l][(i, j)])
                    .collect();
                let ds: Vec<T> = (0..n)
                    .map(|l| {
                        mj.ddg[m][i][(l, j)] + mj.ddg[m][j][(l, i)] - mj.ddg[m][l][(i, j)]
                    })
                    .collect();
                for k in 0..n {
                    let mut acc = T::zero();
                    for l in 0..n {
                        acc += dginv[m][(k, l)] * s[l] + ginv[(k, l)] * ds[l];
                    }
                    dgamma[m * n * n * n + idx3(k, i, j)] = acc * 0.5;
                }
            }
        }
    }
    let dg = |m: usize, k: usize, i: usize, j: usize| dgamma[m * n * n * n + idx3(k, i, j)];
    let idx4 = |a: usize, b: usize, c: usize, d: usize| ((a * n + b) * n + c) * n + d;
    let mut up = vec![T::zero(); n * n * n * n];
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut r = dg(i, l, j, k) - dg(j, l, i, k);
                    for m in 0..n {
                        r += gamma.get(l, i, m) * gamma.get(m, j, k)
                            - gamma.get(l, j, m) * gamma.get(m, i, k);
                    }
                    up[idx4(l, i, j, k)] = r;
                }
            }
        }
    }
    let mut low = vec![T::zero(); n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let mut acc = T::zero();
                    for m in 0..n {
                        acc += up[idx4(m, i, j, k)] * mj.g[(m, l)];
                    }
                    low[idx4(i, j, k, l)] = acc;
                }
            }
        }
    }
    (up, low)
}

/// Components `R(W_a, W_b, W_c, W_d)` of a lowered four-tensor against the
/// columns of `w`, by successive single-index contractions.
pub(crate) fn frame_components<T: Real>(low: &[T], w: &Mat<T>, n: usize) -> Vec<T> {
    let mut cur = low.to_vec();
    // contract slot `s` (0..4) each pass; index layout stays ((a n + b) n + c) n + d
    for slot in 0..4 {
        let mut next = vec![T::zero(); n * n * n * n];
        let stride = n.pow(3 - slot as u32);
        for idx in 0..n * n * n * n {
            let new_k = (idx / stride) % n;
            let base = idx - new_k * stride;
            let mut acc = T::zero();
            for old_k in 0..n {
                acc += cur[base + old_k * stride] * w[(old_k, new_k)];
            }
            next[idx] = acc;
        }
        cur = next;
    }
    cur
}
