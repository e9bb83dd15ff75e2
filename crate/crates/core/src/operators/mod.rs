//! Differential operators on `C^∞(FM)`: the geodesic field `𝐗`, vertical
//! and horizontal gradients, their formal adjoints, the curvature operator
//! `R_FM`, and residuals of the structure equations relating them.

pub mod testfn;

use crate::error::{GeometryError, Result};
use crate::frame_bundle::{reference_frame_t, Direction, FramePoint, SkewForm};
use crate::jets::{derive, DeriveMethod, Derived, FieldSpec, Real, ScalarField};
use crate::linalg::Mat;
use crate::manifold::{basis_pairs, frame_components, riemann_generic, MetricModel};

/// `𝐗f = B_{e_1} f`.
pub fn x_apply(model: &MetricModel, f: &dyn ScalarField, w: &FramePoint) -> Result<f64> {
    derive(model, f, w, &[FieldSpec::x(model.dim)], DeriveMethod::Jet)
}

/// `∇_𝕍 f = Σ_{i<j} (Y_{ij} f) e_i∧e_j`.
pub fn grad_v(model: &MetricModel, f: &dyn ScalarField, w: &FramePoint) -> Result<SkewForm> {
    let n = model.dim;
    let c = basis_pairs(n)
        .into_iter()
        .map(|(i, j)| derive(model, f, w, &[FieldSpec::y(n, i, j)], DeriveMethod::Jet))
        .collect::<Result<Vec<_>>>()?;
    Ok(SkewForm::from_coeffs(n, &c))
}

/// `∇_ℍ f = Σ_{j≥2} (B_{e_j} f) e_1∧e_j`.
pub fn grad_h(model: &MetricModel, f: &dyn ScalarField, w: &FramePoint) -> Result<SkewForm> {
    let n = model.dim;
    let mut c = vec![0.0; n * (n - 1) / 2];
    // pairs (0, j) come first in lexicographic order
    for j in 1..n {
        c[j - 1] = derive(model, f, w, &[FieldSpec::b(n, j)], DeriveMethod::Jet)?;
    }
    Ok(SkewForm::from_coeffs(n, &c))
}

/// A `Λ²ℝⁿ`-valued function with one scalar component per `(e_i∧e_j)_{i<j}`.
pub struct TwoFormField<'a> {
    n: usize,
    components: Vec<Box<dyn ScalarField + 'a>>,
}

impl<'a> TwoFormField<'a> {
    pub fn new(n: usize, components: Vec<Box<dyn ScalarField + 'a>>) -> Result<Self> {
        if components.len() != n * (n - 1) / 2 {
            return Err(GeometryError::DegenerateInput(format!(
                "a 2-form field on ℝ^{n} needs {} components, got {}",
                n * (n - 1) / 2,
                components.len()
            )));
        }
        Ok(TwoFormField { n, components })
    }

    /// `∇_𝕍 f` as a field.
    pub fn vertical_gradient(n: usize, f: &'a dyn ScalarField) -> Self {
        let components = basis_pairs(n)
            .into_iter()
            .map(|(i, j)| {
                Box::new(Derived {
                    f,
                    chain: vec![FieldSpec::y(n, i, j)],
                }) as Box<dyn ScalarField + 'a>
            })
            .collect();
        TwoFormField { n, components }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn component(&self, k: usize) -> &dyn ScalarField {
        self.components[k].as_ref()
    }

    pub fn eval(&self, model: &MetricModel, w: &FramePoint) -> Result<SkewForm> {
        let c = self
            .components
            .iter()
            .map(|f| f.eval(model, w))
            .collect::<Result<Vec<_>>>()?;
        Ok(SkewForm::from_coeffs(self.n, &c))
    }
}

/// `∇*_𝕍 F = −Σ_{i<j} Y_{ij} F_{ij}`.
pub fn div_v(model: &MetricModel, field: &TwoFormField, w: &FramePoint) -> Result<f64> {
    let n = field.n;
    let mut acc = 0.0;
    for (k, (i, j)) in basis_pairs(n).into_iter().enumerate() {
        acc -= derive(model, field.component(k), w, &[FieldSpec::y(n, i, j)], DeriveMethod::Jet)?;
    }
    Ok(acc)
}

/// `∇*_ℍ F = −Σ_{j≥2} B_{e_j} F_{1j}`.
pub fn div_h(model: &MetricModel, field: &TwoFormField, w: &FramePoint) -> Result<f64> {
    let n = field.n;
    let mut acc = 0.0;
    for j in 1..n {
        acc -= derive(model, field.component(j - 1), w, &[FieldSpec::b(n, j)], DeriveMethod::Jet)?;
    }
    Ok(acc)
}

/// Riemann tensor in the frame `w = E(x)·a`: `R(w_a, w_b, w_c, w_d)`, flat index
/// `((a n + b) n + c) n + d`.
pub(crate) fn frame_riemann_t<T: Real>(model: &MetricModel, x: &[T], a: &Mat<T>) -> Vec<T> {
    let n = model.dim;
    if model.is_flat() {
        return vec![T::zero(); n * n * n * n];
    }
    let (_, low) = riemann_generic(model, x);
    let w = reference_frame_t(model, x).matmul(a);
    frame_components(&low, &w, n)
}

/// Matrix of `R_FM(w)` in the basis `(e_i∧e_j)_{i<j}`: row `(1,l)`, column
/// `(i,j)` holds `R(w_l, w_1, w_i, w_j)`; rows not of the form `(1,l)` vanish.
pub(crate) fn r_fm_matrix_t<T: Real>(model: &MetricModel, x: &[T], a: &Mat<T>) -> Mat<T> {
    let n = model.dim;
    let pairs = basis_pairs(n);
    let hat = frame_riemann_t(model, x, a);
    Mat::from_fn(pairs.len(), pairs.len(), |p, q| {
        let (r, l) = pairs[p];
        if r != 0 {
            return T::zero();
        }
        let (i, j) = pairs[q];
        hat[((l * n) * n + i) * n + j]
    })
}

/// `⟨R_FM(w) ξ, ξ′⟩` as a matrix acting on coefficient vectors.
pub fn r_fm_matrix(model: &MetricModel, w: &FramePoint) -> Result<Mat<f64>> {
    model.check_domain(w.x.chart, &w.x.coords)?;
    Ok(r_fm_matrix_t(model, &w.x.coords, &w.a))
}

/// `R_FM(w) ξ`.
pub fn r_fm_apply(model: &MetricModel, w: &FramePoint, xi: &SkewForm) -> Result<SkewForm> {
    let m = r_fm_matrix(model, w)?;
    Ok(SkewForm::from_coeffs(model.dim, &m.mat_vec(&xi.coeffs())))
}

/// The structure equations checked by [`structural_residual`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Structural {
    /// `[Y_ξ, Y_ξ′] = Y_{[ξ,ξ′]}`
    VV,
    /// `[Y_ξ, B_θ] = B_{ξθ}`
    VB,
    /// `[B_θ, B_θ′] = −(w⁻¹ℛ(wθ ∧ wθ′))^𝕍`
    BB,
    /// `∇_ℍ = −[𝐗, ∇_𝕍]`
    XV,
    /// `[𝐗, ∇_ℍ] = R_FM ∇_𝕍`
    XH,
    /// `∇*_ℍ∇_𝕍 − ∇*_𝕍∇_ℍ = −(n−1)𝐗`
    HV,
}

impl Structural {
    pub const ALL: [Structural; 6] = [
        Structural::VV,
        Structural::VB,
        Structural::BB,
        Structural::XV,
        Structural::XH,
        Structural::HV,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Structural::VV => "VV",
            Structural::VB => "VB",
            Structural::BB => "BB",
            Structural::XV => "XV",
            Structural::XH => "XH",
            Structural::HV => "HV",
        }
    }

    /// Vector-valued identities are compared as a whole in the `Λ²` norm.
    pub fn is_vector(&self) -> bool {
        matches!(self, Structural::XV | Structural::XH)
    }
}

/// Outcome of one identity evaluation at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    /// Left side of the worst basis choice (or component).
    pub lhs: f64,
    pub rhs: f64,
    /// Absolute defect: worst `|lhs − rhs|`, or the `Λ²` norm for vector identities.
    pub absolute: f64,
    /// Largest individual term magnitude, floored at `1e−12`.
    pub scale: f64,
    pub relative: f64,
}

/// Accumulates `(lhs, rhs)` per basis choice and the magnitudes of the
/// individual terms that produced them.
struct Tally {
    vector: bool,
    worst: (f64, f64, f64),
    sum_sq: f64,
    scale: f64,
}

impl Tally {
    fn new(vector: bool) -> Self {
        Tally {
            vector,
            worst: (0.0, 0.0, -1.0),
            sum_sq: 0.0,
            scale: 0.0,
        }
    }

    fn terms(&mut self, ts: &[f64]) {
        for t in ts {
            self.scale = self.scale.max(t.abs());
        }
    }

    fn push(&mut self, lhs: f64, rhs: f64) {
        let d = (lhs - rhs).abs();
        self.sum_sq += d * d;
        if d > self.worst.2 {
            self.worst = (lhs, rhs, d);
        }
        self.terms(&[lhs, rhs]);
    }

    fn finish(self) -> Residual {
        let absolute = if self.vector {
            self.sum_sq.sqrt()
        } else {
            self.worst.2.max(0.0)
        };
        let scale = self.scale.max(1e-12);
        Residual {
            lhs: self.worst.0,
            rhs: self.worst.1,
            absolute,
            scale,
            relative: absolute / scale,
        }
    }
}

/// Evaluate one structure equation at `w` over all basis choices.
pub fn structural_residual(
    model: &MetricModel,
    f: &dyn ScalarField,
    w: &FramePoint,
    which: Structural,
    method: DeriveMethod,
) -> Result<Residual> {
    let n = model.dim;
    let pairs = basis_pairs(n);
    let d = |chain: &[FieldSpec]| derive(model, f, w, chain, method);
    let mut t = Tally::new(which.is_vector());
    match which {
        Structural::VV => {
            for (p, &(i, j)) in pairs.iter().enumerate() {
                for &(k, l) in &pairs[p + 1..] {
                    let (a, b) = (SkewForm::basis(n, i, j), SkewForm::basis(n, k, l));
                    let ab = d(&[FieldSpec::Vertical(a.clone()), FieldSpec::Vertical(b.clone())])?;
                    let ba = d(&[FieldSpec::Vertical(b.clone()), FieldSpec::Vertical(a.clone())])?;
                    let rhs = d(&[FieldSpec::Vertical(a.bracket(&b))])?;
                    t.terms(&[ab, ba]);
                    t.push(ab - ba, rhs);
                }
            }
        }
        Structural::VB => {
            for &(i, j) in &pairs {
                let xi = SkewForm::basis(n, i, j);
                for k in 0..n {
                    let y = FieldSpec::Vertical(xi.clone());
                    let b = FieldSpec::b(n, k);
                    let yb = d(&[y.clone(), b.clone()])?;
                    let by = d(&[b, y])?;
                    let theta = xi.apply(&Direction::basis(n, k).theta);
                    let rhs = d(&[FieldSpec::Standard(Direction::new(theta))])?;
                    t.terms(&[yb, by]);
                    t.push(yb - by, rhs);
                }
            }
        }
        Structural::BB => {
            model.check_domain(w.x.chart, &w.x.coords)?;
            let hat = frame_riemann_t(model, &w.x.coords, &w.a);
            for i in 0..n {
                for j in (i + 1)..n {
                    let (bi, bj) = (FieldSpec::b(n, i), FieldSpec::b(n, j));
                    let ij = d(&[bi.clone(), bj.clone()])?;
                    let ji = d(&[bj, bi])?;
                    let zeta: Vec<f64> = pairs
                        .iter()
                        .map(|&(p, q)| hat[((i * n + j) * n + p) * n + q])
                        .collect();
                    let rhs = -d(&[FieldSpec::Vertical(SkewForm::from_coeffs(n, &zeta))])?;
                    t.terms(&[ij, ji]);
                    t.push(ij - ji, rhs);
                }
            }
        }
        Structural::XV => {
            let x = FieldSpec::x(n);
            for &(i, j) in &pairs {
                let y = FieldSpec::y(n, i, j);
                let lhs = if i == 0 { d(&[FieldSpec::b(n, j)])? } else { 0.0 };
                let xy = d(&[x.clone(), y.clone()])?;
                let yx = d(&[y, x.clone()])?;
                t.terms(&[xy, yx]);
                t.push(lhs, -(xy - yx));
            }
        }
        Structural::XH => {
            model.check_domain(w.x.chart, &w.x.coords)?;
            let m = r_fm_matrix_t(model, &w.x.coords, &w.a);
            let gv: Vec<f64> = pairs
                .iter()
                .map(|&(i, j)| d(&[FieldSpec::y(n, i, j)]))
                .collect::<Result<_>>()?;
            let x = FieldSpec::x(n);
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let (lhs, rhs) = if i == 0 {
                    let b = FieldSpec::b(n, j);
                    let xb = d(&[x.clone(), b.clone()])?;
                    let bx = d(&[b, x.clone()])?;
                    t.terms(&[xb, bx]);
                    let rhs: f64 = (0..pairs.len()).map(|q| m[(p, q)] * gv[q]).sum();
                    (xb - bx, rhs)
                } else {
                    (0.0, 0.0)
                };
                t.push(lhs, rhs);
            }
        }
        Structural::HV => {
            let mut lhs = 0.0;
            for j in 1..n {
                let (y, b) = (FieldSpec::y(n, 0, j), FieldSpec::b(n, j));
                let yb = d(&[y.clone(), b.clone()])?;
                let by = d(&[b, y])?;
                t.terms(&[yb, by]);
                lhs += yb - by;
            }
            let rhs = -((n - 1) as f64) * d(&[FieldSpec::x(n)])?;
            t.push(lhs, rhs);
        }
    }
    Ok(t.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{Constant, FrameEntry, SinCoordinate};
    use crate::linalg::expm;
    use crate::manifold::ChartPoint;
    use testfn::{TestFunctionFamily, TestFunctionKind};

    fn frame3(x: Vec<f64>, c: [f64; 3]) -> FramePoint {
        FramePoint::new(ChartPoint::new(0, x), expm(SkewForm::from_coeffs(3, &c).matrix()))
    }

    #[test]
    fn x_of_constant_and_coordinate() {
        let m = MetricModel::flat_torus(2);
        let w = FramePoint::reference(ChartPoint::new(0, vec![1.0, 2.0]));
        assert_eq!(x_apply(&m, &Constant(3.0), &w).unwrap(), 0.0);
        assert_eq!(x_apply(&m, &crate::jets::Coordinate(0), &w).unwrap(), 1.0);
    }

    #[test]
    fn gradients_on_the_torus() {
        let m = MetricModel::flat_torus(2);
        let w = FramePoint::reference(ChartPoint::new(0, vec![0.3, 1.1]));
        let gh = grad_h(&m, &SinCoordinate(1), &w).unwrap();
        assert!((gh.coeff(0, 1) - 1.1f64.cos()).abs() < 1e-15);
        assert_eq!(grad_v(&m, &SinCoordinate(1), &w).unwrap().norm(), 0.0);
        assert_eq!(grad_h(&m, &FrameEntry(0, 1), &w).unwrap().norm(), 0.0);
        assert_eq!(grad_v(&m, &FrameEntry(1, 0), &w).unwrap().coeff(0, 1), 1.0);
    }

    #[test]
    fn divergence_of_single_component() {
        let m = MetricModel::flat_torus(3);
        let w = frame3(vec![0.1, 0.2, 0.3], [0.5, -0.2, 0.9]);
        let comps: Vec<Box<dyn ScalarField>> = vec![
            Box::new(FrameEntry(1, 0)),
            Box::new(Constant(0.0)),
            Box::new(Constant(0.0)),
        ];
        let field = TwoFormField::new(3, comps).unwrap();
        let dv = div_v(&m, &field, &w).unwrap();
        let y = derive(&m, &FrameEntry(1, 0), &w, &[FieldSpec::y(3, 0, 1)], DeriveMethod::Jet).unwrap();
        assert_eq!(dv, -y);
        let consts: Vec<Box<dyn ScalarField>> = (0..3).map(|_| Box::new(Constant(2.0)) as Box<dyn ScalarField>).collect();
        let c = TwoFormField::new(3, consts).unwrap();
        assert_eq!(div_v(&m, &c, &w).unwrap(), 0.0);
        assert_eq!(div_h(&m, &c, &w).unwrap(), 0.0);
        assert!(TwoFormField::new(3, vec![]).is_err());
    }

    #[test]
    fn hyperbolic_r_fm_closed_form() {
        let m = MetricModel::hyperbolic_ball(3);
        let w = frame3(vec![0.3, -0.1, 0.4], [0.7, -1.2, 0.4]);
        let mat = r_fm_matrix(&m, &w).unwrap();
        let xi = SkewForm::from_coeffs(3, &[0.3, -0.8, 1.5]);
        let eta = SkewForm::from_coeffs(3, &[-1.1, 0.4, 0.2]);
        let e1 = [1.0, 0.0, 0.0];
        let expected = -xi
            .apply(&e1)
            .iter()
            .zip(eta.apply(&e1))
            .map(|(a, b)| a * b)
            .sum::<f64>();
        let got = r_fm_apply(&m, &w, &xi).unwrap().inner(&eta);
        assert!((got - expected).abs() < 1e-8);
        // image constraint: row (2,3) vanishes
        for q in 0..3 {
            assert_eq!(mat[(2, q)], 0.0);
        }
    }

    #[test]
    fn flat_r_fm_vanishes() {
        let m = MetricModel::flat_torus(3);
        let w = frame3(vec![0.0; 3], [0.1, 0.2, 0.3]);
        assert_eq!(r_fm_matrix(&m, &w).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn structural_identities_hold_on_curved_models() {
        let cases = [
            (MetricModel::round_sphere(3, 1.0), TestFunctionKind::GroupMatrixPoly),
            (MetricModel::perturbed_hyperbolic(3, 0.05), TestFunctionKind::ChartBump),
            (MetricModel::flat_torus(3), TestFunctionKind::TorusTrigPoly),
        ];
        for (m, kind) in cases {
            let f = TestFunctionFamily::random(kind, 3, 3, 11);
            let w = frame3(vec![0.2, -0.35, 0.1], [0.4, 1.3, -0.6]);
            for which in Structural::ALL {
                let r = structural_residual(&m, &f, &w, which, DeriveMethod::Jet).unwrap();
                assert!(r.relative < 1e-9, "{} {}: {r:?}", m.label(), which.name());
                assert!(r.scale > 1e-6, "{} {} degenerate", m.label(), which.name());
            }
        }
    }

    #[test]
    fn l25_on_constant_is_exactly_zero() {
        let m = MetricModel::hyperbolic_ball(3);
        let w = frame3(vec![0.1, 0.1, 0.1], [0.0, 0.0, 0.0]);
        let r = structural_residual(&m, &Constant(1.0), &w, Structural::HV, DeriveMethod::Jet).unwrap();
        assert_eq!(r.absolute, 0.0);
    }
}
