//! Nested directional derivatives of scalar fields on `FM` along chains of
//! fundamental (`Y_ξ`) and standard (`B_θ`) vector fields.
//!
//! `(V_1 V_2 … V_k f)(w)` is the mixed partial `∂_{t_1} … ∂_{t_k}` at zero of
//! `f(Φ^{k}_{t_k} ∘ … ∘ Φ^{1}_{t_1}(w))`: the state moves along `V_1` first.
//! The jet path gives each field its own nilpotent parameter `ε_i` with
//! `ε_i² = 0`, so a single Euler step `s ← s + ε_i V_i(s)` reproduces the flow
//! exactly to the order that survives. No time integration is involved and
//! the result is exact up to rounding. The finite-difference path flows with
//! the integrators of [`crate::frame_bundle`] and is kept as an oracle.

mod dual;

pub use dual::{Jet, Real, MAX_VARS};

use crate::error::{GeometryError, Result};
use crate::frame_bundle::{
    b_theta_flow, standard_velocity, vertical_flow, vertical_velocity, Direction, FramePoint,
    FrameState, SkewForm,
};
use crate::linalg::Mat;
use crate::manifold::MetricModel;

/// Frame coordinates carrying jets.
pub type JetFrame = FrameState<Jet>;

/// A smooth function on `FM` with plain and jet-valued evaluation.
pub trait ScalarField: Send + Sync {
    fn eval(&self, model: &MetricModel, w: &FramePoint) -> Result<f64>;
    fn eval_jet(&self, model: &MetricModel, w: &JetFrame) -> Result<Jet>;
}

/// A field written once over any [`Real`] scalar; implementing this gives
/// [`ScalarField`] for free.
pub trait GenericField: Send + Sync {
    fn eval_generic<T: Real>(&self, model: &MetricModel, w: &FrameState<T>) -> T;
}

impl<F: GenericField> ScalarField for F {
    fn eval(&self, model: &MetricModel, w: &FramePoint) -> Result<f64> {
        Ok(self.eval_generic(model, &w.state::<f64>()))
    }

    fn eval_jet(&self, model: &MetricModel, w: &JetFrame) -> Result<Jet> {
        Ok(self.eval_generic(model, w))
    }
}

/// A vector field on `FM` named by its generator.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldSpec {
    Vertical(SkewForm),
    Standard(Direction),
}

impl FieldSpec {
    /// `Y_{ij}`, the fundamental field of `e_i ∧ e_j`.
    pub fn y(n: usize, i: usize, j: usize) -> Self {
        FieldSpec::Vertical(SkewForm::basis(n, i, j))
    }

    /// `B_{e_i}`.
    pub fn b(n: usize, i: usize) -> Self {
        FieldSpec::Standard(Direction::basis(n, i))
    }

    /// The geodesic vector field `𝐗 = B_{e_1}`.
    pub fn x(n: usize) -> Self {
        FieldSpec::b(n, 0)
    }
}

/// Finite-difference settings: centered differences at `h, h/2, …` combined
/// by `levels` rounds of Richardson extrapolation. Horizontal flows use RK4
/// with step `min(dt_max, |s|/10)` for a flow time `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdConfig {
    pub h: f64,
    pub levels: usize,
    pub dt_max: f64,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            h: 1e-2,
            levels: 2,
            dt_max: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeriveMethod {
    Jet,
    Fd(FdConfig),
}

/// Number of jet parameters in use anywhere in the state.
pub fn scope(st: &JetFrame) -> usize {
    st.x
        .iter()
        .chain(st.a.as_slice())
        .map(Jet::nvars)
        .max()
        .unwrap_or(0)
}

/// `s + ε_var · V(s)`.
pub fn push_forward(model: &MetricModel, spec: &FieldSpec, st: &JetFrame, var: usize) -> JetFrame {
    let (dx, da): (Option<Vec<Jet>>, Mat<Jet>) = match spec {
        FieldSpec::Vertical(xi) => (None, vertical_velocity(&st.a, xi)),
        FieldSpec::Standard(th) => {
            let (dx, da) = standard_velocity(model, &st.x, &st.a, &th.theta);
            (Some(dx), da)
        }
    };
    let x = match dx {
        Some(dx) => st
            .x
            .iter()
            .zip(&dx)
            .map(|(&p, q)| p + q.times_var(var))
            .collect(),
        None => st.x.clone(),
    };
    let a = st.a.add(&da.map(|q| q.times_var(var)));
    FrameState {
        chart: st.chart,
        x,
        a,
    }
}

fn check_order(have: usize, len: usize) -> Result<()> {
    if have + len > MAX_VARS {
        return Err(GeometryError::UnsupportedOrder {
            got: have + len,
            max: MAX_VARS,
        });
    }
    Ok(())
}

/// `(V_1 … V_k f)` at a jet-valued state, as a jet in the state's own
/// parameters. Fresh parameters are allocated above the state's scope.
pub fn chain_jet(
    model: &MetricModel,
    f: &dyn ScalarField,
    st: &JetFrame,
    chain: &[FieldSpec],
) -> Result<Jet> {
    let base = scope(st);
    check_order(base, chain.len())?;
    let mut cur = st.clone();
    for (k, spec) in chain.iter().enumerate() {
        cur = push_forward(model, spec, &cur, base + k);
    }
    let mut v = f.eval_jet(model, &cur)?;
    for var in (base..base + chain.len()).rev() {
        v = v.partial(var);
    }
    Ok(v)
}

fn check_chain(model: &MetricModel, w: &FramePoint, chain: &[FieldSpec]) -> Result<()> {
    if chain.is_empty() {
        return Err(GeometryError::Precondition("derivative chain is empty".into()));
    }
    check_order(0, chain.len())?;
    for spec in chain {
        let d = match spec {
            FieldSpec::Vertical(xi) => xi.dim(),
            FieldSpec::Standard(th) => th.dim(),
        };
        if d != model.dim {
            return Err(GeometryError::DegenerateInput(format!(
                "field of dimension {d} on a {}-manifold",
                model.dim
            )));
        }
    }
    model.check_domain(w.x.chart, &w.x.coords)
}

/// `(V_1 V_2 … V_k f)(w)` with `1 ≤ k ≤ 4`.
pub fn derive(
    model: &MetricModel,
    f: &dyn ScalarField,
    w: &FramePoint,
    chain: &[FieldSpec],
    method: DeriveMethod,
) -> Result<f64> {
    check_chain(model, w, chain)?;
    match method {
        DeriveMethod::Jet => Ok(chain_jet(model, f, &w.state(), chain)?.value()),
        DeriveMethod::Fd(cfg) => derive_fd(model, f, w, chain, &cfg),
    }
}

/// `(ABf − BAf)(w)`.
pub fn commutator_apply(
    model: &MetricModel,
    f: &dyn ScalarField,
    w: &FramePoint,
    a: &FieldSpec,
    b: &FieldSpec,
    method: DeriveMethod,
) -> Result<f64> {
    let ab = derive(model, f, w, &[a.clone(), b.clone()], method)?;
    let ba = derive(model, f, w, &[b.clone(), a.clone()], method)?;
    Ok(ab - ba)
}

fn flow_by(model: &MetricModel, spec: &FieldSpec, w: &FramePoint, s: f64, cfg: &FdConfig) -> Result<FramePoint> {
    match spec {
        FieldSpec::Vertical(xi) => Ok(vertical_flow(w, xi, s)),
        FieldSpec::Standard(th) => {
            let dt = cfg.dt_max.min(s.abs() / 10.0);
            b_theta_flow(model, w, th, s, dt)
        }
    }
}

/// Richardson table over centered differences at `h, h/2, …, h/2^levels`.
pub fn richardson(d: impl Fn(f64) -> Result<f64>, h: f64, levels: usize) -> Result<f64> {
    let mut col: Vec<f64> = (0..=levels)
        .map(|k| d(h / f64::powi(2.0, k as i32)))
        .collect::<Result<_>>()?;
    for j in 1..=levels {
        let w = f64::powi(4.0, j as i32);
        col = (0..col.len() - 1)
            .map(|k| (w * col[k + 1] - col[k]) / (w - 1.0))
            .collect();
    }
    Ok(col[0])
}

fn derive_fd(
    model: &MetricModel,
    f: &dyn ScalarField,
    w: &FramePoint,
    chain: &[FieldSpec],
    cfg: &FdConfig,
) -> Result<f64> {
    let Some((head, rest)) = chain.split_first() else {
        return f.eval(model, w);
    };
    let inner = |p: &FramePoint| -> Result<f64> {
        if rest.is_empty() {
            f.eval(model, p)
        } else {
            derive_fd(model, f, p, rest, cfg)
        }
    };
    let diff = |h: f64| -> Result<f64> {
        let fwd = inner(&flow_by(model, head, w, h, cfg)?)?;
        let bwd = inner(&flow_by(model, head, w, -h, cfg)?)?;
        Ok((fwd - bwd) / (2.0 * h))
    };
    richardson(diff, cfg.h, cfg.levels)
}

/// `V_1 … V_k f` as a field in its own right, usable inside further chains.
pub struct Derived<'a> {
    pub f: &'a dyn ScalarField,
    pub chain: Vec<FieldSpec>,
}

impl ScalarField for Derived<'_> {
    fn eval(&self, model: &MetricModel, w: &FramePoint) -> Result<f64> {
        Ok(chain_jet(model, self.f, &w.state(), &self.chain)?.value())
    }

    fn eval_jet(&self, model: &MetricModel, w: &JetFrame) -> Result<Jet> {
        chain_jet(model, self.f, w, &self.chain)
    }
}

/// Pointwise product of two fields.
pub struct Product<'a>(pub &'a dyn ScalarField, pub &'a dyn ScalarField);

impl ScalarField for Product<'_> {
    fn eval(&self, model: &MetricModel, w: &FramePoint) -> Result<f64> {
        Ok(self.0.eval(model, w)? * self.1.eval(model, w)?)
    }

    fn eval_jet(&self, model: &MetricModel, w: &JetFrame) -> Result<Jet> {
        Ok(self.0.eval_jet(model, w)? * self.1.eval_jet(model, w)?)
    }
}

/// `Σ c_k f_k`.
pub struct LinearCombination<'a>(pub Vec<(f64, &'a dyn ScalarField)>);

impl ScalarField for LinearCombination<'_> {
    fn eval(&self, model: &MetricModel, w: &FramePoint) -> Result<f64> {
        let mut acc = 0.0;
        for (c, f) in &self.0 {
            acc += c * f.eval(model, w)?;
        }
        Ok(acc)
    }

    fn eval_jet(&self, model: &MetricModel, w: &JetFrame) -> Result<Jet> {
        let mut acc = Jet::constant(0.0);
        for (c, f) in &self.0 {
            acc += f.eval_jet(model, w)? * *c;
        }
        Ok(acc)
    }
}

/// Constant function.
pub struct Constant(pub f64);

impl GenericField for Constant {
    fn eval_generic<T: Real>(&self, _: &MetricModel, _: &FrameState<T>) -> T {
        T::cst(self.0)
    }
}

/// Chart coordinate `x_i`.
pub struct Coordinate(pub usize);

impl GenericField for Coordinate {
    fn eval_generic<T: Real>(&self, _: &MetricModel, w: &FrameState<T>) -> T {
        w.x[self.0]
    }
}

/// `sin(x_i)`.
pub struct SinCoordinate(pub usize);

impl GenericField for SinCoordinate {
    fn eval_generic<T: Real>(&self, _: &MetricModel, w: &FrameState<T>) -> T {
        w.x[self.0].sin()
    }
}

/// Matrix entry `a_{ij}` of the fiber rotation.
pub struct FrameEntry(pub usize, pub usize);

impl GenericField for FrameEntry {
    fn eval_generic<T: Real>(&self, _: &MetricModel, w: &FrameState<T>) -> T {
        w.a[(self.0, self.1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::ChartPoint;

    /// `cos(x_1 + 2 x_2) · a_{12} + sin(x_2) · a_{21} a_{22}` for `n = 2`.
    struct Mixed;

    impl GenericField for Mixed {
        fn eval_generic<T: Real>(&self, _: &MetricModel, w: &FrameState<T>) -> T {
            (w.x[0] + w.x[1] * 2.0).cos() * w.a[(0, 1)] + w.x[1].sin() * w.a[(1, 0)] * w.a[(1, 1)]
        }
    }

    fn rot2(t: f64) -> Mat<f64> {
        Mat::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
    }

    #[test]
    fn vertical_derivative_of_entry_is_exact() {
        let m = MetricModel::flat_torus(3);
        let a = crate::linalg::expm(SkewForm::from_coeffs(3, &[0.3, 0.1, -0.5]).matrix());
        let w = FramePoint::new(ChartPoint::origin(3), a.clone());
        let xi = SkewForm::from_coeffs(3, &[1.0, -2.0, 0.5]);
        let d = derive(&m, &FrameEntry(0, 0), &w, &[FieldSpec::Vertical(xi.clone())], DeriveMethod::Jet).unwrap();
        assert_eq!(d, a.matmul(xi.matrix())[(0, 0)]);
    }

    #[test]
    fn straight_line_derivative_on_torus() {
        let m = MetricModel::flat_torus(2);
        let w = FramePoint::reference(ChartPoint::new(0, vec![0.7, 0.0]));
        let d = derive(&m, &SinCoordinate(0), &w, &[FieldSpec::x(2)], DeriveMethod::Jet).unwrap();
        assert!((d - 0.7f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn grad_v_sign_on_entries() {
        let m = MetricModel::flat_torus(2);
        let w = FramePoint::reference(ChartPoint::origin(2));
        let y = [FieldSpec::y(2, 0, 1)];
        assert_eq!(derive(&m, &FrameEntry(0, 0), &w, &y, DeriveMethod::Jet).unwrap(), 0.0);
        assert_eq!(derive(&m, &FrameEntry(1, 0), &w, &y, DeriveMethod::Jet).unwrap(), 1.0);
    }

    #[test]
    fn flat_standard_fields_commute() {
        let m = MetricModel::flat_torus(3);
        struct F;
        impl GenericField for F {
            fn eval_generic<T: Real>(&self, _: &MetricModel, w: &FrameState<T>) -> T {
                (w.x[0] * w.x[1]).sin() * w.a[(2, 1)] + w.x[2] * w.x[2] * w.a[(0, 2)]
            }
        }
        let w = FramePoint::new(ChartPoint::new(0, vec![0.4, 1.1, 2.0]), crate::linalg::expm(SkewForm::from_coeffs(3, &[0.2, 0.7, -0.4]).matrix()));
        let c = commutator_apply(&m, &F, &w, &FieldSpec::b(3, 1), &FieldSpec::b(3, 2), DeriveMethod::Jet).unwrap();
        assert!(c.abs() < 1e-12);
        let same = commutator_apply(&m, &F, &w, &FieldSpec::b(3, 1), &FieldSpec::b(3, 1), DeriveMethod::Jet).unwrap();
        assert_eq!(same, 0.0);
    }

    #[test]
    fn chains_longer_than_four_are_rejected() {
        let m = MetricModel::flat_torus(2);
        let w = FramePoint::reference(ChartPoint::origin(2));
        let chain = vec![FieldSpec::x(2); 5];
        assert_eq!(
            derive(&m, &Mixed, &w, &chain, DeriveMethod::Jet),
            Err(GeometryError::UnsupportedOrder { got: 5, max: 4 })
        );
        let inner = Derived {
            f: &Mixed,
            chain: vec![FieldSpec::x(2); 2],
        };
        assert!(derive(&m, &inner, &w, &vec![FieldSpec::x(2); 3], DeriveMethod::Jet).is_err());
    }

    #[test]
    fn jet_matches_fd_on_the_sphere() {
        let m = MetricModel::round_sphere(2, 1.0);
        let w = FramePoint::new(ChartPoint::new(0, vec![0.3, -0.4]), rot2(0.8));
        let chains = [
            vec![FieldSpec::x(2)],
            vec![FieldSpec::b(2, 1), FieldSpec::y(2, 0, 1)],
            vec![FieldSpec::x(2), FieldSpec::b(2, 1), FieldSpec::x(2)],
        ];
        for chain in &chains {
            let j = derive(&m, &Mixed, &w, chain, DeriveMethod::Jet).unwrap();
            let f = derive(&m, &Mixed, &w, chain, DeriveMethod::Fd(FdConfig::default())).unwrap();
            assert!((j - f).abs() <= 1e-6 * (1.0 + j.abs()), "{chain:?}: {j} vs {f}");
        }
    }

    #[test]
    fn fd_converges_at_second_order_per_level() {
        let m = MetricModel::hyperbolic_ball(2);
        let w = FramePoint::new(ChartPoint::new(0, vec![0.2, 0.1]), rot2(-0.5));
        let chain = [FieldSpec::x(2)];
        let exact = derive(&m, &Mixed, &w, &chain, DeriveMethod::Jet).unwrap();
        let err = |h: f64| {
            let cfg = FdConfig { h, levels: 0, dt_max: 1e-3 };
            (derive(&m, &Mixed, &w, &chain, DeriveMethod::Fd(cfg)).unwrap() - exact).abs()
        };
        let (e1, e2) = (err(4e-2), err(2e-2));
        assert!((e1 / e2).log2() > 1.9, "{e1} {e2}");
    }

    #[test]
    fn leibniz_rule() {
        let m = MetricModel::perturbed_hyperbolic(2, 0.05);
        let w = FramePoint::new(ChartPoint::new(0, vec![0.2, -0.3]), rot2(1.2));
        let g = FrameEntry(1, 1);
        let fg = Product(&Mixed, &g);
        let v = [FieldSpec::b(2, 1)];
        let lhs = derive(&m, &fg, &w, &v, DeriveMethod::Jet).unwrap();
        let rhs = Mixed.eval(&m, &w).unwrap() * derive(&m, &g, &w, &v, DeriveMethod::Jet).unwrap()
            + g.eval(&m, &w).unwrap() * derive(&m, &Mixed, &w, &v, DeriveMethod::Jet).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn derived_field_nests() {
        let m = MetricModel::round_sphere(2, 1.3);
        let w = FramePoint::new(ChartPoint::new(1, vec![-0.2, 0.5]), rot2(0.1));
        let xy = Derived {
            f: &Mixed,
            chain: vec![FieldSpec::y(2, 0, 1)],
        };
        let nested = derive(&m, &xy, &w, &[FieldSpec::x(2)], DeriveMethod::Jet).unwrap();
        let direct = derive(&m, &Mixed, &w, &[FieldSpec::x(2), FieldSpec::y(2, 0, 1)], DeriveMethod::Jet).unwrap();
        assert!((nested - direct).abs() < 1e-13);
    }
}
