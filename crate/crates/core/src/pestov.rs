//! Pestov identities on `FM` and the curvature cross-checks behind them.
//!
//! Pointwise, with `𝐗* = −𝐗`, `∇*_𝕍 F = −Σ_α Y_α F_α` and `α` running over
//! `(e_i∧e_j)_{i<j}`:
//!
//! ```text
//!   Σ_α 𝐗Y_αY_α𝐗f − Σ_α Y_α𝐗𝐗Y_α f = −(n−1)𝐗𝐗f + Σ_β Y_β (R_FM ∇_𝕍 f)_β
//! ```
//!
//! Integrated against the normalized Liouville measure this becomes the
//! universal identity
//! `‖∇_𝕍𝐗u‖² − ‖𝐗∇_𝕍u‖² = (n−1)‖𝐗u‖² − ⟨R_FM∇_𝕍u, ∇_𝕍u⟩`, estimated here by
//! Monte Carlo with both sides drawn from one sample stream.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::frame_bundle::{
    connection_map, sm_pushforward, vertical_field, FramePoint, SkewForm, UnitTangent,
};
use crate::jets::{chain_jet, derive, push_forward, DeriveMethod, FieldSpec, Jet, JetFrame, Real, ScalarField};
use crate::linalg::Mat;
use crate::manifold::{basis_pairs, MetricModel, ModelKind};
use crate::measure::{haar_so, integrate_vec, sample_frame, stream_rng, McEstimate};
use crate::operators::testfn::{TestFunctionFamily, TestFunctionKind};
use crate::operators::{r_fm_matrix, r_fm_matrix_t, structural_residual, Structural};

pub use crate::operators::testfn::InvarianceClass;

/// Invariance defect above which an associated check refuses to run.
pub const INVARIANCE_TOLERANCE: f64 = 1e-8;
/// Frames drawn to test invariance and equivariance of a lift.
const INVARIANCE_PROBES: usize = 32;

/// One verified identity, in the form written to reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub model: MetricModel,
    pub testfn: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, f64>,
}

impl IdentityCheck {
    /// `residual = |lhs − rhs|`, passing iff `residual ≤ max(tolerance, 4·stderr)`.
    pub fn new(
        name: impl Into<String>,
        model: &MetricModel,
        testfn: impl Into<String>,
        lhs: f64,
        rhs: f64,
        stderr: f64,
        tolerance: f64,
    ) -> Self {
        let residual = (lhs - rhs).abs();
        IdentityCheck {
            name: name.into(),
            model: model.clone(),
            testfn: testfn.into(),
            lhs,
            rhs,
            residual,
            stderr,
            tolerance,
            pass: Self::passes(residual, stderr, tolerance),
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn passes(residual: f64, stderr: f64, tolerance: f64) -> bool {
        residual <= tolerance.max(4.0 * stderr)
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

fn pair_fields(n: usize) -> Vec<FieldSpec> {
    basis_pairs(n)
        .into_iter()
        .map(|(i, j)| FieldSpec::y(n, i, j))
        .collect()
}

/// `(R_FM ∇_𝕍 f)_β`, evaluated with the curvature taken at the (jet-valued)
/// state so that further derivatives see its variation.
struct CurvedGradient<'a> {
    f: &'a dyn ScalarField,
    row: usize,
}

impl ScalarField for CurvedGradient<'_> {
    fn eval(&self, model: &MetricModel, w: &FramePoint) -> Result<f64> {
        Ok(self.eval_jet(model, &w.state())?.value())
    }

    fn eval_jet(&self, model: &MetricModel, st: &JetFrame) -> Result<Jet> {
        let m = r_fm_matrix_t(model, &st.x, &st.a);
        let mut acc = Jet::constant(0.0);
        for (alpha, y) in pair_fields(model.dim).into_iter().enumerate() {
            let c = m[(self.row, alpha)];
            if c.value() == 0.0 && c.nvars() == 0 {
                continue;
            }
            acc += c * chain_jet(model, self.f, st, &[y])?;
        }
        Ok(acc)
    }
}

/// The four terms of the pointwise identity `t1 − t2 = t3 − t4`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PestovTerms {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

impl PestovTerms {
    pub fn lhs(&self) -> f64 {
        self.t1 - self.t2
    }

    pub fn rhs(&self) -> f64 {
        self.t3 - self.t4
    }

    pub fn scale(&self) -> f64 {
        [self.t1, self.t2, self.t3, self.t4]
            .iter()
            .fold(1e-12f64, |m, t| m.max(t.abs()))
    }

    pub fn relative(&self) -> f64 {
        (self.lhs() - self.rhs()).abs() / self.scale()
    }
}

pub fn pointwise_pestov_terms(
    model: &MetricModel,
    f: &dyn ScalarField,
    w: &FramePoint,
    method: DeriveMethod,
) -> Result<PestovTerms> {
    let n = model.dim;
    let x = FieldSpec::x(n);
    let ys = pair_fields(n);
    let d = |chain: &[FieldSpec]| derive(model, f, w, chain, method);
    let (mut t1, mut t2) = (0.0, 0.0);
    for y in &ys {
        t1 += d(&[x.clone(), y.clone(), y.clone(), x.clone()])?;
        t2 += d(&[y.clone(), x.clone(), x.clone(), y.clone()])?;
    }
    let t3 = -((n - 1) as f64) * d(&[x.clone(), x])?;
    let mut t4 = 0.0;
    if !model.is_flat() {
        for (beta, y) in ys.iter().enumerate() {
            let (i, _) = basis_pairs(n)[beta];
            if i != 0 {
                continue;
            }
            let g = CurvedGradient { f, row: beta };
            t4 -= derive(model, &g, w, std::slice::from_ref(y), method)?;
        }
    }
    Ok(PestovTerms { t1, t2, t3, t4 })
}

/// Relative residual of the pointwise identity at `w`.
pub fn pointwise_pestov_residual(model: &MetricModel, f: &dyn ScalarField, w: &FramePoint) -> Result<f64> {
    Ok(pointwise_pestov_terms(model, f, w, DeriveMethod::Jet)?.relative())
}

/// Per-sample integrands of the universal identity:
/// `[‖∇_𝕍𝐗u‖², ‖𝐗∇_𝕍u‖², (n−1)(𝐗u)², ⟨R_FM∇_𝕍u, ∇_𝕍u⟩]` at `w`.
pub fn pestov_integrands(model: &MetricModel, f: &dyn ScalarField, w: &FramePoint) -> Result<[f64; 4]> {
    let n = model.dim;
    let x = FieldSpec::x(n);
    let st: JetFrame = w.state();
    let two = |a: &FieldSpec, b: &FieldSpec| -> Result<Jet> {
        let s = push_forward(model, b, &push_forward(model, a, &st, 0), 1);
        f.eval_jet(model, &s)
    };
    let ys = pair_fields(n);
    let (mut vx, mut xv, mut xu) = (0.0, 0.0, 0.0);
    let mut grad = Vec::with_capacity(ys.len());
    for y in &ys {
        // flowing along X then Y_α: coefficient 1 is 𝐗u, 2 is Y_αu, 3 is 𝐗Y_αu
        let j = two(&x, y)?;
        xu = j.coeff(1);
        grad.push(j.coeff(2));
        xv += j.coeff(3) * j.coeff(3);
        let k = two(y, &x)?;
        vx += k.coeff(3) * k.coeff(3);
    }
    let curv = if model.is_flat() {
        0.0
    } else {
        let m = r_fm_matrix(model, w)?;
        let mg = m.mat_vec(&grad);
        mg.iter().zip(&grad).map(|(a, b)| a * b).sum()
    };
    Ok([vx, xv, (n - 1) as f64 * xu * xu, curv])
}

fn require_global(model: &MetricModel) -> Result<()> {
    if !matches!(model.kind, ModelKind::FlatTorus | ModelKind::RoundSphere) {
        return Err(GeometryError::UnsupportedModel(format!(
            "unsupported model for global checks: {}",
            model.label()
        )));
    }
    model.validate()
}

/// Monte Carlo estimate of both sides plus the shared-stream difference.
fn estimate_universal(
    model: &MetricModel,
    f: &dyn ScalarField,
    seed: u64,
    count: usize,
) -> Result<(Vec<McEstimate>, [McEstimate; 3])> {
    let est = integrate_vec(model, seed, count, 7, |w| {
        let [vx, xv, xx, curv] = pestov_integrands(model, f, w)?;
        let (lhs, rhs) = (vx - xv, xx - curv);
        Ok(vec![vx, xv, xx, curv, lhs, rhs, lhs - rhs])
    })?;
    let sides = [est[4], est[5], est[6]];
    Ok((est, sides))
}

fn universal_check(
    name: &str,
    model: &MetricModel,
    label: String,
    f: &dyn ScalarField,
    seed: u64,
    count: usize,
    tolerance: f64,
) -> Result<IdentityCheck> {
    let (terms, [lhs, rhs, diff]) = estimate_universal(model, f, seed, count)?;
    Ok(IdentityCheck::new(name, model, label, lhs.value, rhs.value, diff.stderr, tolerance)
        .with("count", count as f64)
        .with("norm_sq_grad_v_x_u", terms[0].value)
        .with("norm_sq_x_grad_v_u", terms[1].value)
        .with("n_minus_1_norm_sq_x_u", terms[2].value)
        .with("curvature_term", terms[3].value)
        .with("stderr_lhs", lhs.stderr)
        .with("stderr_rhs", rhs.stderr)
        .with("mean_difference", diff.value))
}

/// Universal identity on a closed model. `label` names the test function in
/// the report.
pub fn global_pestov_residual(
    model: &MetricModel,
    f: &dyn ScalarField,
    label: &str,
    seed: u64,
    count: usize,
    tolerance: f64,
) -> Result<IdentityCheck> {
    require_global(model)?;
    universal_check("global_pestov", model, label.to_string(), f, seed, count, tolerance)
}

/// Block rotation `diag(I_k, b)` acting on the trailing frame columns.
fn fiber_rotation(n: usize, class: InvarianceClass, rng: &mut impl rand::Rng) -> Mat<f64> {
    let k = class.free_columns().min(n);
    let m = n - k;
    let b = if m >= 2 { haar_so(m, rng) } else { Mat::identity(m) };
    Mat::from_fn(n, n, |i, j| {
        if i < k || j < k {
            if i == j { 1.0 } else { 0.0 }
        } else {
            b[(i - k, j - k)]
        }
    })
}

/// Measured defects of a lift: `(max |u(wb) − u(w)|, max |∇_𝕍u(wb) − b⁻¹∇_𝕍u(w)b|,
/// max |Y_{ij}u|` over pairs inside the group's block`)`.
pub fn invariance_defects(
    model: &MetricModel,
    class: InvarianceClass,
    f: &dyn ScalarField,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let n = model.dim;
    let k = class.free_columns();
    let mut rng = stream_rng(seed, u64::MAX);
    let (mut inv, mut equi, mut block) = (0.0f64, 0.0f64, 0.0f64);
    let grad = |w: &FramePoint| -> Result<SkewForm> {
        let c = pair_fields(n)
            .into_iter()
            .map(|y| derive(model, f, w, &[y], DeriveMethod::Jet))
            .collect::<Result<Vec<_>>>()?;
        Ok(SkewForm::from_coeffs(n, &c))
    };
    for _ in 0..INVARIANCE_PROBES {
        let w = sample_frame(model, &mut rng);
        let b = fiber_rotation(n, class, &mut rng);
        let wb = w.right_mul(&b);
        inv = inv.max((f.eval(model, &wb)? - f.eval(model, &w)?).abs());
        let (g, gb) = (grad(&w)?, grad(&wb)?);
        equi = equi.max(gb.sub(&g.conjugate(&b)).norm());
        for (alpha, (i, j)) in basis_pairs(n).into_iter().enumerate() {
            if i >= k && j >= k {
                block = block.max(g.coeffs()[alpha].abs());
            }
        }
    }
    Ok((inv, equi, block))
}

/// Associated identity for `PM = FM/G`, run as the universal identity on
/// the `G`-invariant lift `f`.
pub fn associated_pestov_residual(
    model: &MetricModel,
    class: InvarianceClass,
    f: &dyn ScalarField,
    label: &str,
    seed: u64,
    count: usize,
    tolerance: f64,
) -> Result<IdentityCheck> {
    require_global(model)?;
    if model.dim < class.free_columns() + 1 {
        return Err(GeometryError::Precondition(format!(
            "class {} needs n > {}",
            class.name(),
            class.free_columns()
        )));
    }
    let (inv, equi, block) = invariance_defects(model, class, f, seed)?;
    if inv > INVARIANCE_TOLERANCE {
        return Err(GeometryError::Precondition(format!(
            "test function is not {}-invariant (defect {inv:.3e})",
            class.name()
        )));
    }
    let name = format!("associated_pestov_{}", class.name());
    Ok(universal_check(&name, model, label.to_string(), f, seed, count, tolerance)?
        .with("invariance_defect", inv)
        .with("equivariance_defect", equi)
        .with("fiber_gradient_defect", block))
}

/// `(⟨R_FM ξ, ξ′⟩, R(𝒦T, v, v, 𝒦T′))` for `ξ = e_1∧θ`, `ξ′ = e_1∧θ′` and
/// `T = dπ′(Y_ξ)` pushed to `SM`. The right side goes through the chart
/// Riemann tensor and the connection map only.
pub fn r_sm_terms(model: &MetricModel, w: &FramePoint, theta: &[f64], theta2: &[f64]) -> Result<(f64, f64)> {
    let n = model.dim;
    let e1: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    let xi = SkewForm::wedge(&e1, theta);
    let xi2 = SkewForm::wedge(&e1, theta2);
    let m = r_fm_matrix(model, w)?;
    let lhs: f64 = m
        .mat_vec(&xi.coeffs())
        .iter()
        .zip(xi2.coeffs())
        .map(|(a, b)| a * b)
        .sum();
    let p = UnitTangent::of_frame(model, w)?;
    let k = connection_map(model, &p, &sm_pushforward(model, &vertical_field(w, &xi))?)?;
    let k2 = connection_map(model, &p, &sm_pushforward(model, &vertical_field(w, &xi2))?)?;
    let rhs = model.riemann_at(&w.x)?.eval(&k, &p.v, &p.v, &k2);
    Ok((lhs, rhs))
}

/// `|⟨R_FM ξ, ξ′⟩ − ⟨ℛ_x(𝒦T∧v), v∧𝒦T′⟩|`.
pub fn r_sm_crosscheck(model: &MetricModel, w: &FramePoint, theta: &[f64], theta2: &[f64]) -> Result<f64> {
    let (l, r) = r_sm_terms(model, w, theta, theta2)?;
    Ok((l - r).abs())
}

/// `⟨R_FM(w)ξ, ξ′⟩` assembled from the chart curvature tensor:
/// `Σ_{i<j} ξ_{ij} R(w(ξ′e_1), w e_1, w_i, w_j)`.
pub fn r_fm_pairing_direct(model: &MetricModel, w: &FramePoint, xi: &SkewForm, xi2: &SkewForm) -> Result<f64> {
    let n = model.dim;
    let frame = w.frame(model)?;
    let curv = model.riemann_at(&w.x)?;
    let u = frame.mat_vec(&xi2.apply(&frame_e1(n)));
    let v = frame.column(0);
    let mut acc = 0.0;
    for (i, j) in basis_pairs(n) {
        let c = xi.coeff(i, j);
        if c != 0.0 {
            acc += c * curv.eval(&u, &v, &frame.column(i), &frame.column(j));
        }
    }
    Ok(acc)
}

fn frame_e1(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect()
}

fn gaussian_vec(n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()
}

/// Max cross-check error over `draws` random `(w, θ, θ′)`.
pub fn r_sm_sweep(model: &MetricModel, seed: u64, draws: usize, tolerance: f64) -> Result<IdentityCheck> {
    let n = model.dim;
    let errs: Vec<(f64, f64, f64)> = (0..draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let w = sample_frame(model, &mut rng);
            let (t1, t2) = (gaussian_vec(n, &mut rng), gaussian_vec(n, &mut rng));
            let (l, r) = r_sm_terms(model, &w, &t1, &t2)?;
            Ok((l, r, (l - r).abs()))
        })
        .collect::<Result<_>>()?;
    let worst = worst_of(&errs);
    Ok(
        IdentityCheck::new("r_sm_crosscheck", model, "none", worst.0, worst.1, 0.0, tolerance)
            .with("draws", draws as f64),
    )
}

/// Largest output-side component of `R_FM` against pairs `e_i∧e_j` with
/// `i, j ≥ 2`, from the direct tensor assembly.
pub fn image_constraint_sweep(model: &MetricModel, seed: u64, draws: usize, tolerance: f64) -> Result<IdentityCheck> {
    let n = model.dim;
    let pairs = basis_pairs(n);
    let worst = (0..draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let w = sample_frame(model, &mut rng);
            let xi = SkewForm::from_coeffs(n, &gaussian_vec(pairs.len(), &mut rng));
            let mut m = 0.0f64;
            for &(i, j) in pairs.iter().filter(|(i, _)| *i >= 1) {
                let out = r_fm_pairing_direct(model, &w, &xi, &SkewForm::basis(n, i, j))?;
                m = m.max(out.abs());
            }
            Ok(m)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    Ok(
        IdentityCheck::new("r_fm_image_constraint", model, "none", worst, 0.0, 0.0, tolerance)
            .with("draws", draws as f64),
    )
}

fn worst_of(v: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    v.iter()
        .copied()
        .fold((0.0, 0.0, -1.0), |a, b| if b.2 > a.2 { b } else { a })
}

/// Constant curvature −1: `⟨R_FM(w)ξ, ξ′⟩ = −⟨ξe_1, ξ′e_1⟩`, max deviation
/// over `draws` random `(w, ξ, ξ′)`.
pub fn hyperbolic_example_check(
    model: &MetricModel,
    seed: u64,
    draws: usize,
    tolerance: f64,
) -> Result<IdentityCheck> {
    if model.kind != ModelKind::HyperbolicBall {
        return Err(GeometryError::UnsupportedModel(format!(
            "constant-curvature example needs the hyperbolic ball, got {}",
            model.label()
        )));
    }
    let n = model.dim;
    let np = n * (n - 1) / 2;
    let e1 = frame_e1(n);
    let vals: Vec<(f64, f64, f64)> = (0..draws)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let w = sample_frame(model, &mut rng);
            let xi = SkewForm::from_coeffs(n, &gaussian_vec(np, &mut rng));
            let xi2 = SkewForm::from_coeffs(n, &gaussian_vec(np, &mut rng));
            let m = r_fm_matrix(model, &w)?;
            let lhs: f64 = m
                .mat_vec(&xi.coeffs())
                .iter()
                .zip(xi2.coeffs())
                .map(|(a, b)| a * b)
                .sum();
            let rhs: f64 = -xi
                .apply(&e1)
                .iter()
                .zip(xi2.apply(&e1))
                .map(|(a, b)| a * b)
                .sum::<f64>();
            Ok((lhs, rhs, (lhs - rhs).abs()))
        })
        .collect::<Result<_>>()?;
    let worst = worst_of(&vals);
    Ok(
        IdentityCheck::new("hyperbolic_r_fm_example", model, "none", worst.0, worst.1, 0.0, tolerance)
            .with("draws", draws as f64),
    )
}

/// Seed of the test function used at sweep point `k`.
pub fn sweep_function_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn sweep_label(model: &MetricModel, degree: usize, seed: u64, points: usize) -> String {
    format!(
        "{}(deg={degree}) x{points} from seed {seed}",
        TestFunctionKind::for_model(model).name()
    )
}

/// Worst relative residual of one structure equation over `points` random
/// `(w, f)`. `lhs`/`rhs` are the worst point's sides divided by its scale;
/// for vector identities `lhs` carries the relative `Λ²` defect and `rhs = 0`.
pub fn structural_sweep(
    model: &MetricModel,
    which: Structural,
    seed: u64,
    points: usize,
    degree: usize,
    tolerance: f64,
) -> Result<IdentityCheck> {
    let kind = TestFunctionKind::for_model(model);
    let rows: Vec<(f64, f64, f64, f64)> = (0..points)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let w = sample_frame(model, &mut rng);
            let f = TestFunctionFamily::random(kind, model.dim, degree, sweep_function_seed(seed, k));
            let r = structural_residual(model, &f, &w, which, DeriveMethod::Jet)?;
            let (l, rr) = if which.is_vector() {
                (r.relative, 0.0)
            } else {
                (r.lhs / r.scale, r.rhs / r.scale)
            };
            Ok((l, rr, r.relative, r.scale))
        })
        .collect::<Result<_>>()?;
    sweep_check(&format!("structural_{}", which.name()), model, degree, seed, &rows, tolerance)
}

/// Worst relative residual of the pointwise identity over `points` random
/// `(w, f)`, reported like [`structural_sweep`].
pub fn pointwise_sweep(
    model: &MetricModel,
    seed: u64,
    points: usize,
    degree: usize,
    tolerance: f64,
) -> Result<IdentityCheck> {
    let kind = TestFunctionKind::for_model(model);
    let rows: Vec<(f64, f64, f64, f64)> = (0..points)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let w = sample_frame(model, &mut rng);
            let f = TestFunctionFamily::random(kind, model.dim, degree, sweep_function_seed(seed, k));
            let t = pointwise_pestov_terms(model, &f, &w, DeriveMethod::Jet)?;
            let s = t.scale();
            Ok((t.lhs() / s, t.rhs() / s, t.relative(), s))
        })
        .collect::<Result<_>>()?;
    sweep_check("pointwise_pestov", model, degree, seed, &rows, tolerance)
}

fn sweep_check(
    name: &str,
    model: &MetricModel,
    degree: usize,
    seed: u64,
    rows: &[(f64, f64, f64, f64)],
    tolerance: f64,
) -> Result<IdentityCheck> {
    let (k, worst) = rows
        .iter()
        .enumerate()
        .fold((0, rows[0]), |a, (k, r)| if r.2 > a.1 .2 { (k, *r) } else { a });
    let mean = rows.iter().map(|r| r.2).sum::<f64>() / rows.len() as f64;
    let min_scale = rows.iter().map(|r| r.3).fold(f64::INFINITY, f64::min);
    let mut c = IdentityCheck::new(
        name,
        model,
        sweep_label(model, degree, seed, rows.len()),
        worst.0,
        worst.1,
        0.0,
        tolerance,
    );
    // the vector identities report lhs = relative defect, rhs = 0
    c.residual = worst.2;
    c.pass = IdentityCheck::passes(c.residual, 0.0, tolerance);
    Ok(c.with("worst_point", k as f64)
        .with("worst_scale", worst.3)
        .with("min_scale", min_scale)
        .with("mean_relative", mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{Constant, FrameEntry, GenericField};
    use crate::frame_bundle::FrameState;
    use crate::linalg::expm;
    use crate::manifold::ChartPoint;

    fn frame3(x: Vec<f64>, c: [f64; 3]) -> FramePoint {
        FramePoint::new(ChartPoint::new(0, x), expm(SkewForm::from_coeffs(3, &c).matrix()))
    }

    #[test]
    fn pass_rule() {
        let m = MetricModel::flat_torus(2);
        let c = IdentityCheck::new("t", &m, "f", 1.0, 1.3, 0.1, 1e-6);
        assert!((c.residual - 0.3).abs() < 1e-15);
        assert!(c.pass);
        assert!(!IdentityCheck::new("t", &m, "f", 1.0, 1.5, 0.1, 1e-6).pass);
        assert!(!IdentityCheck::new("t", &m, "f", f64::NAN, 0.0, 0.0, 1.0).pass);
    }

    #[test]
    fn constant_function_has_zero_terms() {
        let m = MetricModel::perturbed_hyperbolic(3, 0.05);
        let w = frame3(vec![0.1, 0.2, -0.3], [0.4, 0.1, -0.7]);
        let t = pointwise_pestov_terms(&m, &Constant(1.0), &w, DeriveMethod::Jet).unwrap();
        assert_eq!((t.t1, t.t2, t.t3, t.t4), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(t.relative(), 0.0);
    }

    #[test]
    fn pointwise_identity_on_curved_models() {
        for m in [
            MetricModel::hyperbolic_ball(3),
            MetricModel::perturbed_hyperbolic(3, 0.05),
            MetricModel::round_sphere(3, 1.0),
            MetricModel::flat_torus(3),
        ] {
            let kind = TestFunctionKind::for_model(&m);
            let f = TestFunctionFamily::random(kind, 3, 2, 17);
            let w = frame3(vec![0.2, -0.3, 0.25], [0.3, -0.6, 1.1]);
            let t = pointwise_pestov_terms(&m, &f, &w, DeriveMethod::Jet).unwrap();
            assert!(t.relative() < 1e-10, "{}: {t:?}", m.label());
            if !m.is_flat() {
                assert!(t.t4.abs() > 1e-6 * t.scale());
            }
        }
    }

    #[test]
    fn integrands_match_chain_derivatives() {
        let m = MetricModel::round_sphere(2, 1.0);
        let f = TestFunctionFamily::random(TestFunctionKind::GroupMatrixPoly, 2, 2, 3);
        let w = FramePoint::new(ChartPoint::new(0, vec![0.3, -0.2]), expm(SkewForm::from_coeffs(2, &[0.5]).matrix()));
        let [vx, xv, xx, curv] = pestov_integrands(&m, &f, &w).unwrap();
        let (x, y) = (FieldSpec::x(2), FieldSpec::y(2, 0, 1));
        let d = |c: &[FieldSpec]| derive(&m, &f, &w, c, DeriveMethod::Jet).unwrap();
        assert!((vx - d(&[y.clone(), x.clone()]).powi(2)).abs() < 1e-12);
        assert!((xv - d(&[x.clone(), y.clone()]).powi(2)).abs() < 1e-12);
        assert!((xx - d(&[x]).powi(2)).abs() < 1e-12);
        // for n = 2 the curvature term is K |Yu|²
        assert!((curv - d(&[y]).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn global_rejects_open_models() {
        let m = MetricModel::hyperbolic_ball(3);
        let e = global_pestov_residual(&m, &Constant(1.0), "c", 0, 1000, 1e-10).unwrap_err();
        assert!(e.to_string().contains("unsupported model for global checks"));
    }

    #[test]
    fn global_identity_on_small_sample() {
        let m = MetricModel::flat_torus(2);
        let f = TestFunctionFamily::random(TestFunctionKind::TorusTrigPoly, 2, 2, 8);
        let c = global_pestov_residual(&m, &f, &f.describe(), 5, 20_000, 1e-10).unwrap();
        assert!(c.pass, "{c:?}");
        assert!(c.stderr > 0.0);
        assert_eq!(c.diagnostics["curvature_term"], 0.0);
    }

    /// `a_{11} · a_{21}` plus a column-2 entry: not `SO(n−1)`-invariant.
    struct Leaky;

    impl GenericField for Leaky {
        fn eval_generic<T: Real>(&self, _: &MetricModel, w: &FrameState<T>) -> T {
            w.a[(0, 0)] * w.a[(1, 0)] + w.a[(2, 1)]
        }
    }

    #[test]
    fn associated_checks_invariance() {
        let m = MetricModel::flat_torus(3);
        let e = associated_pestov_residual(&m, InvarianceClass::SOn1, &Leaky, "leaky", 1, 1000, 1e-10);
        assert!(matches!(e, Err(GeometryError::Precondition(_))));
        let f = TestFunctionFamily::invariant(TestFunctionKind::TorusTrigPoly, 3, 2, 4, InvarianceClass::SOn1);
        let (inv, equi, block) = invariance_defects(&m, InvarianceClass::SOn1, &f, 2).unwrap();
        assert!(inv < 1e-12 && equi < 1e-12 && block < 1e-12, "{inv} {equi} {block}");
        assert!(invariance_defects(&m, InvarianceClass::SOn1, &FrameEntry(0, 0), 2).unwrap().0 < 1e-15);
    }

    #[test]
    fn r_sm_on_hyperbolic_ball() {
        let m = MetricModel::hyperbolic_ball(3);
        let w = frame3(vec![0.4, 0.1, -0.2], [0.9, 0.3, -0.5]);
        let (t1, t2) = ([0.3, 1.0, -0.5], [-0.1, 0.4, 0.8]);
        let (l, r) = r_sm_terms(&m, &w, &t1, &t2).unwrap();
        let expected = -(t1[1] * t2[1] + t1[2] * t2[2]);
        assert!((l - expected).abs() < 1e-10);
        assert!((r - expected).abs() < 1e-8);
    }

    #[test]
    fn r_sm_diagonal_is_sectional_curvature() {
        let m = MetricModel::perturbed_hyperbolic(3, 0.05);
        let w = frame3(vec![0.2, 0.5, -0.1], [0.2, -1.0, 0.6]);
        let theta = [0.7, -0.4, 1.2];
        let (l, r) = r_sm_terms(&m, &w, &theta, &theta).unwrap();
        let frame = w.frame(&m).unwrap();
        let e1 = frame_e1(3);
        let xi = SkewForm::wedge(&e1, &theta);
        let k = frame.mat_vec(&xi.apply(&e1));
        let g = m.metric_at(&w.x).unwrap();
        let kk: f64 = k.iter().zip(g.mat_vec(&k)).map(|(a, b)| a * b).sum();
        let sec = m.sectional_curvature(&w.x, &k, &frame.column(0)).unwrap();
        assert!((r - sec * kk).abs() < 1e-8);
        assert!((l - r).abs() < 1e-8);
    }

    #[test]
    fn direct_pairing_matches_matrix() {
        let m = MetricModel::perturbed_hyperbolic(3, 0.05);
        let w = frame3(vec![-0.3, 0.1, 0.4], [1.0, 0.2, -0.3]);
        let mat = r_fm_matrix(&m, &w).unwrap();
        for p in 0..3 {
            for q in 0..3 {
                let xi = SkewForm::from_coeffs(3, &[(q == 0) as u8 as f64, (q == 1) as u8 as f64, (q == 2) as u8 as f64]);
                let xi2 = SkewForm::from_coeffs(3, &[(p == 0) as u8 as f64, (p == 1) as u8 as f64, (p == 2) as u8 as f64]);
                let d = r_fm_pairing_direct(&m, &w, &xi, &xi2).unwrap();
                assert!((d - mat[(p, q)]).abs() < 1e-10, "{p}{q}: {d} vs {}", mat[(p, q)]);
            }
        }
    }

    #[test]
    fn hyperbolic_example_unit_cases() {
        let m = MetricModel::hyperbolic_ball(3);
        let w = frame3(vec![0.5, -0.2, 0.1], [0.3, 0.2, 0.1]);
        let e12 = SkewForm::basis(3, 0, 1);
        let r = r_fm_apply_pair(&m, &w, &e12, &e12);
        assert!((r + 1.0).abs() < 1e-10);
        let e23 = SkewForm::basis(3, 1, 2);
        assert!(r_fm_apply_pair(&m, &w, &e23, &e12).abs() < 1e-12);
        let c = hyperbolic_example_check(&m, 3, 200, 1e-8).unwrap();
        assert!(c.pass, "{c:?}");
    }

    fn r_fm_apply_pair(m: &MetricModel, w: &FramePoint, a: &SkewForm, b: &SkewForm) -> f64 {
        crate::operators::r_fm_apply(m, w, a).unwrap().inner(b)
    }

    #[test]
    fn sweeps_pass_on_small_samples() {
        let m = MetricModel::round_sphere(2, 1.0);
        assert!(pointwise_sweep(&m, 1, 4, 2, 1e-6).unwrap().pass);
        assert!(structural_sweep(&m, Structural::XH, 1, 4, 2, 1e-6).unwrap().pass);
        assert!(r_sm_sweep(&m, 1, 10, 1e-8).unwrap().pass);
        assert!(image_constraint_sweep(&m, 1, 10, 1e-12).unwrap().pass);
    }
}
