//! Points and tangent vectors of the oriented orthonormal frame bundle `FM`,
//! the fundamental and standard vector fields, their flows, and the
//! connection map on the unit tangent bundle.
//!
//! A frame is stored through the local trivialization `w = E(x)·a`: `E(x)` is
//! the reference orthonormal frame obtained by Gram–Schmidt of the coordinate
//! basis (for the shipped conformal models `E = e^{−φ} I`) and `a ∈ SO(n)`.
//! In these coordinates
//!
//! * `Y_ξ`: `ẋ = 0`, `ȧ = a ξ`;
//! * `B_θ`: `ẋ = E(x) a θ`, `ȧ = −ω(E a θ) a`,
//!
//! where `ω(Z)_{ij} = g(∇_Z E_j, E_i)` is the connection form of the
//! reference frame.

use crate::error::{GeometryError, Result};
use crate::jets::Real;
use crate::linalg::{expm, polar_rotation, Mat};
use crate::manifold::{basis_pairs, ChartPoint, MetricModel, ModelKind, SPHERE_RECHART_RADIUS};

/// A point of `FM`: base chart point and the rotation relating the
/// reference frame to the frame `w = E(x)·a`.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePoint {
    pub x: ChartPoint,
    pub a: Mat<f64>,
}

/// Frame coordinates over an arbitrary scalar type (plain or jet-valued).
#[derive(Clone, Debug)]
pub struct FrameState<T> {
    pub chart: u8,
    pub x: Vec<T>,
    pub a: Mat<T>,
}

impl FramePoint {
    pub fn new(x: ChartPoint, a: Mat<f64>) -> Self {
        FramePoint { x, a }
    }

    /// Frame at `x` with `a = I`.
    pub fn reference(x: ChartPoint) -> Self {
        let n = x.coords.len();
        FramePoint::new(x, Mat::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.x.coords.len()
    }

    pub fn state<T: Real>(&self) -> FrameState<T> {
        FrameState {
            chart: self.x.chart,
            x: self.x.coords.iter().map(|&v| T::cst(v)).collect(),
            a: Mat::lift(&self.a),
        }
    }

    /// Chart components of the frame vectors `w(e_i) = E(x) a e_i` (columns).
    pub fn frame(&self, model: &MetricModel) -> Result<Mat<f64>> {
        let e = reference_frame(model, &self.x)?;
        Ok(e.matmul(&self.a))
    }

    /// `w · b`, the right action of `b ∈ SO(n)`.
    pub fn right_mul(&self, b: &Mat<f64>) -> FramePoint {
        FramePoint::new(self.x.clone(), self.a.matmul(b))
    }

    /// Worst of `‖aᵀa − I‖_∞`, `|det a − 1|`, and the `g`-orthonormality
    /// defect of the frame columns.
    pub fn invariant_defect(&self, model: &MetricModel) -> Result<f64> {
        let g = model.metric_at(&self.x)?;
        let w = self.frame(model)?;
        let gram = w.transpose().matmul(&g).matmul(&w);
        let id = Mat::identity(self.dim());
        Ok(self
            .a
            .orthonormality_defect()
            .max((self.a.det() - 1.0).abs())
            .max(gram.sub(&id).max_abs()))
    }
}

impl<T: Real> FrameState<T> {
    pub fn values(&self) -> FramePoint {
        FramePoint {
            x: ChartPoint::new(self.chart, self.x.iter().map(|v| v.value()).collect()),
            a: self.a.values(),
        }
    }
}

/// An element of `Λ²ℝⁿ ≅ 𝔰𝔬(n)`, stored as a skew matrix in the convention
/// where `e_i ∧ e_j` acts as `θ ↦ ⟨θ,e_i⟩e_j − ⟨θ,e_j⟩e_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewForm {
    m: Mat<f64>,
}

impl SkewForm {
    pub fn zeros(n: usize) -> Self {
        SkewForm { m: Mat::zeros(n, n) }
    }

    /// `e_i ∧ e_j`; swapping the indices flips the sign.
    pub fn basis(n: usize, i: usize, j: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        if i != j {
            m[(j, i)] = 1.0;
            m[(i, j)] = -1.0;
        }
        SkewForm { m }
    }

    /// `u ∧ v`, i.e. the matrix `v uᵀ − u vᵀ`.
    pub fn wedge(u: &[f64], v: &[f64]) -> Self {
        let n = u.len();
        let mut m = Mat::from_fn(n, n, |i, j| v[i] * u[j] - u[i] * v[j]);
        for i in 0..n {
            m[(i, i)] = 0.0;
        }
        SkewForm { m }
    }

    /// From coefficients along `(e_i ∧ e_j)_{i<j}` in lexicographic order.
    pub fn from_coeffs(n: usize, c: &[f64]) -> Self {
        let mut m = Mat::zeros(n, n);
        for (&(i, j), &v) in basis_pairs(n).iter().zip(c) {
            m[(j, i)] = v;
            m[(i, j)] = -v;
        }
        SkewForm { m }
    }

    /// Accepts a matrix that is skew up to `1e−12` and stores its exact skew part.
    pub fn from_matrix(a: &Mat<f64>) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(GeometryError::DegenerateInput("skew form must be square".into()));
        }
        let defect = a.add(&a.transpose()).max_abs();
        if defect > 1e-12 * (1.0 + a.max_abs()) {
            return Err(GeometryError::DegenerateInput(format!(
                "matrix is not skew-symmetric (defect {defect:.3e})"
            )));
        }
        Ok(SkewForm {
            m: a.sub(&a.transpose()).scale(0.5),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    pub fn matrix(&self) -> &Mat<f64> {
        &self.m
    }

    /// Coefficient along `e_i ∧ e_j`.
    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.m[(j, i)]
    }

    pub fn coeffs(&self) -> Vec<f64> {
        basis_pairs(self.dim())
            .into_iter()
            .map(|(i, j)| self.coeff(i, j))
            .collect()
    }

    /// `ξθ`.
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        self.m.mat_vec(theta)
    }

    /// Matrix commutator `[ξ, η] = ξη − ηξ`.
    pub fn bracket(&self, o: &SkewForm) -> SkewForm {
        SkewForm {
            m: self.m.matmul(&o.m).sub(&o.m.matmul(&self.m)),
        }
    }

    /// `b⁻¹ ξ b` for a rotation `b`.
    pub fn conjugate(&self, b: &Mat<f64>) -> SkewForm {
        SkewForm {
            m: b.transpose().matmul(&self.m).matmul(b),
        }
    }

    pub fn inner(&self, o: &SkewForm) -> f64 {
        self.coeffs().iter().zip(o.coeffs()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn add(&self, o: &SkewForm) -> SkewForm {
        SkewForm { m: self.m.add(&o.m) }
    }

    pub fn sub(&self, o: &SkewForm) -> SkewForm {
        SkewForm { m: self.m.sub(&o.m) }
    }

    pub fn scale(&self, s: f64) -> SkewForm {
        SkewForm { m: self.m.scale(s) }
    }
}

/// A vector `θ ∈ ℝⁿ` naming the standard field `B_θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    pub theta: Vec<f64>,
}

impl Direction {
    pub fn new(theta: Vec<f64>) -> Self {
        Direction { theta }
    }

    pub fn basis(n: usize, i: usize) -> Self {
        let mut theta = vec![0.0; n];
        theta[i] = 1.0;
        Direction { theta }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Tangent vector to `FM` in trivialization coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTangent {
    pub base: FramePoint,
    pub dx: Vec<f64>,
    pub da: Mat<f64>,
}

impl FrameTangent {
    /// Worst entry of `aᵀ da + (aᵀ da)ᵀ`; zero for tangents to `SO(n)`.
    pub fn tangency_defect(&self) -> f64 {
        let s = self.base.a.transpose().matmul(&self.da);
        s.add(&s.transpose()).max_abs()
    }

    /// `ξ` with vertical part `Y_ξ`: `ξ = aᵀ(da + ω(dx) a)`.
    pub fn vertical_part(&self, model: &MetricModel) -> Result<SkewForm> {
        let om = connection_form(model, &self.base.x, &self.dx)?;
        let a = &self.base.a;
        let m = a.transpose().matmul(&self.da.add(&om.matrix().matmul(a)));
        // exact skew part; the symmetric part is the tangency defect
        Ok(SkewForm {
            m: m.sub(&m.transpose()).scale(0.5),
        })
    }

    /// Horizontal part: the lift of `dx`.
    pub fn horizontal_part(&self, model: &MetricModel) -> Result<FrameTangent> {
        let om = connection_form(model, &self.base.x, &self.dx)?;
        Ok(FrameTangent {
            base: self.base.clone(),
            dx: self.dx.clone(),
            da: om.matrix().matmul(&self.base.a).scale(-1.0),
        })
    }
}

pub(crate) fn reference_frame_t<T: Real>(model: &MetricModel, x: &[T]) -> Mat<T> {
    let n = model.dim;
    if model.is_flat() {
        return Mat::identity(n);
    }
    let s = (-model.conformal(x, false).phi).exp();
    Mat::from_fn(n, n, |i, j| if i == j { s } else { T::zero() })
}

/// `ω(Z)_{ik} = Z^i ∂_kφ − Z^k ∂_iφ`, the conformal closed form.
fn omega_from<T: Real>(dphi: &[T], z: &[T]) -> Mat<T> {
    let n = z.len();
    Mat::from_fn(n, n, |i, k| z[i] * dphi[k] - z[k] * dphi[i])
}

pub(crate) fn connection_form_t<T: Real>(model: &MetricModel, x: &[T], z: &[T]) -> Mat<T> {
    let n = model.dim;
    if model.is_flat() {
        return Mat::zeros(n, n);
    }
    omega_from(&model.conformal(x, false).dphi, z)
}

/// Velocity of `B_θ` at `(x, a)`.
pub(crate) fn standard_velocity<T: Real>(
    model: &MetricModel,
    x: &[T],
    a: &Mat<T>,
    theta: &[f64],
) -> (Vec<T>, Mat<T>) {
    let n = model.dim;
    let at: Vec<T> = (0..n)
        .map(|i| {
            let mut acc = T::zero();
            for (j, &th) in theta.iter().enumerate() {
                if th != 0.0 {
                    acc += a[(i, j)] * th;
                }
            }
            acc
        })
        .collect();
    if model.is_flat() {
        return (at, Mat::zeros(n, n));
    }
    let c = model.conformal(x, false);
    let s = (-c.phi).exp();
    let v: Vec<T> = at.iter().map(|&q| q * s).collect();
    let om = omega_from(&c.dphi, &v);
    let da = om.matmul(a).scale(T::cst(-1.0));
    (v, da)
}

/// Velocity of `Y_ξ` at `a`.
pub(crate) fn vertical_velocity<T: Real>(a: &Mat<T>, xi: &SkewForm) -> Mat<T> {
    a.matmul(&Mat::lift(xi.matrix()))
}

/// Reference orthonormal frame `E(x)` (columns are frame vectors).
pub fn reference_frame(model: &MetricModel, x: &ChartPoint) -> Result<Mat<f64>> {
    model.check_domain(x.chart, &x.coords)?;
    Ok(reference_frame_t(model, &x.coords))
}

/// Connection form `ω(Z)` of the reference frame.
pub fn connection_form(model: &MetricModel, x: &ChartPoint, z: &[f64]) -> Result<SkewForm> {
    model.check_domain(x.chart, &x.coords)?;
    if z.len() != model.dim {
        return Err(GeometryError::DegenerateInput(format!(
            "tangent has {} components, expected {}",
            z.len(),
            model.dim
        )));
    }
    Ok(SkewForm {
        m: connection_form_t(model, &x.coords, z),
    })
}

/// `Y_ξ(w)`.
pub fn vertical_field(w: &FramePoint, xi: &SkewForm) -> FrameTangent {
    FrameTangent {
        base: w.clone(),
        dx: vec![0.0; w.dim()],
        da: vertical_velocity(&w.a, xi),
    }
}

/// `B_θ(w)`, the horizontal lift of `w(θ)`.
pub fn standard_field(model: &MetricModel, w: &FramePoint, theta: &Direction) -> Result<FrameTangent> {
    model.check_domain(w.x.chart, &w.x.coords)?;
    let (dx, da) = standard_velocity(model, &w.x.coords, &w.a, &theta.theta);
    Ok(FrameTangent {
        base: w.clone(),
        dx,
        da,
    })
}

/// Exact flow of `Y_ξ`: `(x, a·exp(tξ))`.
pub fn vertical_flow(w: &FramePoint, xi: &SkewForm, t: f64) -> FramePoint {
    FramePoint::new(w.x.clone(), w.a.matmul(&expm(&xi.matrix().scale(t))))
}

/// Samples of an integrated flow. When the trajectory leaves the chart
/// domain, `error` holds the domain error and `points` the part computed
/// before the exit.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub points: Vec<(f64, FramePoint)>,
    pub error: Option<GeometryError>,
}

impl Trajectory {
    pub fn last(&self) -> &FramePoint {
        &self.points.last().expect("trajectory holds the initial point").1
    }
}

fn rk4_step(
    model: &MetricModel,
    x: &[f64],
    a: &Mat<f64>,
    theta: &[f64],
    h: f64,
) -> (Vec<f64>, Mat<f64>) {
    let stage = |dx: &[f64], da: &Mat<f64>, s: f64| {
        let xs: Vec<f64> = x.iter().zip(dx).map(|(p, q)| p + s * q).collect();
        let as_ = a.add(&da.scale(s));
        (xs, as_)
    };
    let (k1x, k1a) = standard_velocity(model, x, a, theta);
    let (x2, a2) = stage(&k1x, &k1a, 0.5 * h);
    let (k2x, k2a) = standard_velocity(model, &x2, &a2, theta);
    let (x3, a3) = stage(&k2x, &k2a, 0.5 * h);
    let (k3x, k3a) = standard_velocity(model, &x3, &a3, theta);
    let (x4, a4) = stage(&k3x, &k3a, h);
    let (k4x, k4a) = standard_velocity(model, &x4, &a4, theta);
    let xn = (0..x.len())
        .map(|i| x[i] + h / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]))
        .collect();
    let an = a.add(
        &k1a.add(&k2a.scale(2.0))
            .add(&k3a.scale(2.0))
            .add(&k4a)
            .scale(h / 6.0),
    );
    (xn, an)
}

/// Bring a frame back into its canonical chart representation: wrap torus
/// coordinates into `[0, L)` and switch sphere charts once `|x| > 1`.
pub fn normalize_chart(model: &MetricModel, w: FramePoint) -> Result<FramePoint> {
    match model.kind {
        ModelKind::FlatTorus => {
            let periods = model.periods();
            let coords = w
                .x
                .coords
                .iter()
                .zip(&periods)
                .map(|(&v, &l)| v.rem_euclid(l))
                .collect();
            Ok(FramePoint::new(ChartPoint::new(0, coords), w.a))
        }
        ModelKind::RoundSphere if w.x.norm() > SPHERE_RECHART_RADIUS => recharted(model, &w),
        _ => Ok(w),
    }
}

/// The same frame expressed in the opposite sphere chart:
/// `a' = L(y)ᵀ J L(x)^{−T} a`, which for the conformal charts is
/// `e^{φ(y)−φ(x)} J a`.
pub fn recharted(model: &MetricModel, w: &FramePoint) -> Result<FramePoint> {
    let (y, jac) = model.sphere_transition(&w.x)?;
    let phi_x = model.conformal(&w.x.coords, false).phi;
    let phi_y = model.conformal(&y.coords, false).phi;
    let a = jac.matmul(&w.a).scale((phi_y - phi_x).exp());
    Ok(FramePoint::new(y, polar_rotation(&a)))
}

/// Integrate the flow of `B_θ` by RK4 with polar re-projection of `a` after
/// every step. Negative `t` integrates backwards. Invalid arguments are
/// errors; leaving the chart domain is reported inside the trajectory.
pub fn b_theta_trajectory(
    model: &MetricModel,
    w: &FramePoint,
    theta: &Direction,
    t: f64,
    dt: f64,
    record: bool,
) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(GeometryError::Precondition(format!("dt must be positive (got {dt})")));
    }
    if !t.is_finite() {
        return Err(GeometryError::Precondition("flow time must be finite".into()));
    }
    if theta.dim() != model.dim || w.dim() != model.dim {
        return Err(GeometryError::DegenerateInput("dimension mismatch".into()));
    }
    model.check_domain(w.x.chart, &w.x.coords)?;
    let steps = (t.abs() / dt).ceil() as usize;
    let mut points = vec![(0.0, w.clone())];
    if steps == 0 || theta.theta.iter().all(|&v| v == 0.0) {
        if t != 0.0 {
            points.push((t, w.clone()));
        }
        return Ok(Trajectory { points, error: None });
    }
    let h = t / steps as f64;
    let mut cur = w.clone();
    for k in 1..=steps {
        let (x, a) = rk4_step(model, &cur.x.coords, &cur.a, &theta.theta, h);
        if let Err(e) = model.check_domain(cur.x.chart, &x) {
            return Ok(Trajectory {
                points,
                error: Some(e),
            });
        }
        let next = FramePoint::new(ChartPoint::new(cur.x.chart, x), polar_rotation(&a));
        cur = normalize_chart(model, next)?;
        let tk = if k == steps { t } else { h * k as f64 };
        if record || k == steps {
            points.push((tk, cur.clone()));
        }
    }
    Ok(Trajectory { points, error: None })
}

/// Flow of `B_θ` for time `t` with RK4 step `dt`.
pub fn b_theta_flow(
    model: &MetricModel,
    w: &FramePoint,
    theta: &Direction,
    t: f64,
    dt: f64,
) -> Result<FramePoint> {
    let tr = b_theta_trajectory(model, w, theta, t, dt, false)?;
    match tr.error {
        Some(e) => Err(e),
        None => Ok(tr.last().clone()),
    }
}

/// Frame flow `Φ_t`, the flow of `𝐗 = B_{e_1}`.
pub fn frame_flow(model: &MetricModel, w: &FramePoint, t: f64, dt: f64) -> Result<FramePoint> {
    b_theta_flow(model, w, &Direction::basis(model.dim, 0), t, dt)
}

/// Frame flow with every step recorded.
pub fn frame_flow_trajectory(
    model: &MetricModel,
    w: &FramePoint,
    t: f64,
    dt: f64,
) -> Result<Trajectory> {
    b_theta_trajectory(model, w, &Direction::basis(model.dim, 0), t, dt, true)
}

/// Distance between frames that accounts for torus periodicity and for
/// sphere points stored in different charts.
pub fn frame_distance(model: &MetricModel, p: &FramePoint, q: &FramePoint) -> Result<f64> {
    match model.kind {
        ModelKind::RoundSphere => {
            let a = group_matrix(model, p)?;
            let b = group_matrix(model, q)?;
            Ok(a.sub(&b).max_abs())
        }
        ModelKind::FlatTorus => {
            let periods = model.periods();
            let dx = p
                .x
                .coords
                .iter()
                .zip(&q.x.coords)
                .zip(&periods)
                .map(|((&u, &v), &l)| {
                    let d = (u - v).rem_euclid(l);
                    d.min(l - d)
                })
                .fold(0.0, f64::max);
            Ok(dx.max(p.a.sub(&q.a).max_abs()))
        }
        _ => {
            let dx = p
                .x
                .coords
                .iter()
                .zip(&q.x.coords)
                .map(|(u, v)| (u - v).abs())
                .fold(0.0, f64::max);
            Ok(dx.max(p.a.sub(&q.a).max_abs()))
        }
    }
}

/// `Q = [w_1 … w_n, p] ∈ SO(n+1)` for a frame on the round sphere: `p` is the
/// base point on the unit sphere and `w_i` are the frame vectors pushed into
/// `ℝⁿ⁺¹` (and rescaled to the unit sphere).
pub(crate) fn group_matrix_t<T: Real>(model: &MetricModel, chart: u8, x: &[T], a: &Mat<T>) -> Mat<T> {
    let n = model.dim;
    let (p, jac) = model.sphere_embedding(chart, x);
    let s = x.iter().fold(T::zero(), |acc, &v| acc + v * v);
    // r·J·E = J (1 + |x|²)/2 has orthonormal columns
    let w = jac.matmul(a).scale((s + 1.0) * 0.5);
    Mat::from_fn(n + 1, n + 1, |i, j| if j < n { w[(i, j)] } else { p[i] })
}

pub fn group_matrix(model: &MetricModel, w: &FramePoint) -> Result<Mat<f64>> {
    if model.kind != ModelKind::RoundSphere {
        return Err(GeometryError::UnsupportedModel(format!(
            "{} has no group-matrix trivialization",
            model.label()
        )));
    }
    model.check_domain(w.x.chart, &w.x.coords)?;
    Ok(group_matrix_t(model, w.x.chart, &w.x.coords, &w.a))
}

/// Inverse of [`group_matrix`], choosing the chart whose projection pole is
/// farther from the base point.
pub fn frame_from_group_matrix(model: &MetricModel, q: &Mat<f64>) -> Result<FramePoint> {
    let n = model.dim;
    if model.kind != ModelKind::RoundSphere || q.rows() != n + 1 || q.cols() != n + 1 {
        return Err(GeometryError::UnsupportedModel(
            "group matrices describe frames on the round sphere only".into(),
        ));
    }
    let p = q.column(n);
    let chart = if p[n] >= 0.0 { 0 } else { 1 };
    let x = model.sphere_project(chart, &p);
    let (_, jac) = model.sphere_embedding(chart, &x);
    let s: f64 = x.iter().map(|v| v * v).sum();
    let basis = jac.scale(0.5 * (1.0 + s));
    let w = Mat::from_fn(n + 1, n, |i, j| q[(i, j)]);
    let a = basis.transpose().matmul(&w);
    Ok(FramePoint::new(ChartPoint::new(chart, x), polar_rotation(&a)))
}

/// A point `(x, v)` of the unit tangent bundle `SM`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitTangent {
    pub x: ChartPoint,
    pub v: Vec<f64>,
}

/// Tangent vector to `SM` at `(x, v)` in chart coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SmTangent {
    pub dx: Vec<f64>,
    pub dv: Vec<f64>,
}

impl UnitTangent {
    /// `(x, w(e_1))`, the image of a frame under `FM → SM`.
    pub fn of_frame(model: &MetricModel, w: &FramePoint) -> Result<Self> {
        Ok(UnitTangent {
            x: w.x.clone(),
            v: w.frame(model)?.column(0),
        })
    }
}

/// Push a tangent of `FM` forward to `SM`: `dv = (∂_{dx}E) a e_1 + E da e_1`.
pub fn sm_pushforward(model: &MetricModel, t: &FrameTangent) -> Result<SmTangent> {
    let x = &t.base.x;
    model.check_domain(x.chart, &x.coords)?;
    let n = model.dim;
    let e = reference_frame_t(model, &x.coords);
    let a1 = t.base.a.column(0);
    let da1 = t.da.column(0);
    let dphi_dx = if model.is_flat() {
        0.0
    } else {
        let c = model.conformal(&x.coords, false);
        c.dphi.iter().zip(&t.dx).map(|(p, q)| p * q).sum::<f64>()
    };
    let dv = (0..n)
        .map(|i| e[(i, i)] * (da1[i] - dphi_dx * a1[i]))
        .collect();
    Ok(SmTangent {
        dx: t.dx.clone(),
        dv,
    })
}

fn gamma_contract(model: &MetricModel, x: &ChartPoint, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let gam = model.christoffel_at(x)?;
    let n = model.dim;
    Ok((0..n)
        .map(|k| {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += gam.get(k, i, j) * u[i] * v[j];
                }
            }
            acc
        })
        .collect())
}

/// Horizontal lift of `Z ∈ T_xM` to `T_{(x,v)}SM`: `dv = −Γ(Z, v)`.
pub fn sm_horizontal_lift(model: &MetricModel, p: &UnitTangent, z: &[f64]) -> Result<SmTangent> {
    let gv = gamma_contract(model, &p.x, z, &p.v)?;
    Ok(SmTangent {
        dx: z.to_vec(),
        dv: gv.into_iter().map(|c| -c).collect(),
    })
}

/// Connection map `𝒦(ζ) = dv + Γ(dx, v)`, the covariant derivative of `v`
/// along a curve with velocity `ζ`.
pub fn connection_map(model: &MetricModel, p: &UnitTangent, zeta: &SmTangent) -> Result<Vec<f64>> {
    let n = model.dim;
    if p.v.len() != n || zeta.dx.len() != n || zeta.dv.len() != n {
        return Err(GeometryError::DegenerateInput("dimension mismatch".into()));
    }
    let mj = model.metric_derivatives_at(&p.x)?;
    let ip = |g: &Mat<f64>, a: &[f64], b: &[f64]| -> f64 {
        let gb = g.mat_vec(b);
        a.iter().zip(&gb).map(|(s, t)| s * t).sum()
    };
    let vv = ip(&mj.g, &p.v, &p.v);
    if (vv - 1.0).abs() > 1e-8 {
        return Err(GeometryError::Precondition(format!(
            "v is not a unit vector (g(v,v) = {vv})"
        )));
    }
    let mut dg = Mat::zeros(n, n);
    for (k, &d) in zeta.dx.iter().enumerate() {
        dg = dg.add(&mj.dg[k].scale(d));
    }
    let rate = ip(&dg, &p.v, &p.v) + 2.0 * ip(&mj.g, &p.v, &zeta.dv);
    let size = zeta
        .dx
        .iter()
        .chain(&zeta.dv)
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    if rate.abs() > 1e-8 * (1.0 + size) {
        return Err(GeometryError::Precondition(format!(
            "ζ is not tangent to SM (d/dt g(v,v) = {rate:.3e})"
        )));
    }
    let gv = gamma_contract(model, &p.x, &zeta.dx, &p.v)?;
    Ok(zeta.dv.iter().zip(gv).map(|(a, b)| a + b).collect())
}
