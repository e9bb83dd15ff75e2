//! Seeded families of smooth test functions on `FM`.
//!
//! * `TorusTrigPoly`: `Σ c_t cos(2π k_t·x/L + φ_t) · m_t(a)` with integer wave
//!   vectors, periodic on the torus.
//! * `GroupMatrixPoly`: `Σ c_t m_t(Q)` for the group matrix `Q ∈ SO(n+1)` of a
//!   frame on the round sphere, so every member is chart independent.
//! * `ChartBump`: `ψ(x) · Σ c_t cos(k_t·x + φ_t) · m_t(a)` with `ψ` a smooth
//!   bump supported in `|x| < 0.95`.
//!
//! `m_t` is a monomial of degree at most `degree` in the matrix entries.
//! Restricting the monomials to the first one or two frame columns yields
//! functions invariant under `SO(n−1)` or `SO(n−2)` acting on the right.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::frame_bundle::{group_matrix_t, FrameState};
use crate::jets::{GenericField, Real};
use crate::manifold::MetricModel;

/// Support radius of the chart bump.
pub const BUMP_RADIUS: f64 = 0.95;
const TERMS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctionKind {
    TorusTrigPoly,
    GroupMatrixPoly,
    ChartBump,
}

impl TestFunctionKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestFunctionKind::TorusTrigPoly => "torus_trig_poly",
            TestFunctionKind::GroupMatrixPoly => "group_matrix_poly",
            TestFunctionKind::ChartBump => "chart_bump",
        }
    }

    /// The family that is globally smooth on the given model.
    pub fn for_model(model: &MetricModel) -> Self {
        use crate::manifold::ModelKind::*;
        match model.kind {
            FlatTorus => TestFunctionKind::TorusTrigPoly,
            RoundSphere => TestFunctionKind::GroupMatrixPoly,
            HyperbolicBall | PerturbedHyperbolic => TestFunctionKind::ChartBump,
        }
    }
}

/// Right-invariance class of a test function: `f(w·b) = f(w)` for
/// `b ∈ SO(n−1)` (functions on `SM`) or `b ∈ SO(n−2)` (functions on the
/// bundle of orthonormal 2-frames).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InvarianceClass {
    #[serde(rename = "SOn1")]
    SOn1,
    #[serde(rename = "SOn2")]
    SOn2,
}

impl InvarianceClass {
    pub fn name(&self) -> &'static str {
        match self {
            InvarianceClass::SOn1 => "SOn1",
            InvarianceClass::SOn2 => "SOn2",
        }
    }

    /// Number of leading frame columns a member may depend on.
    pub fn free_columns(&self) -> usize {
        match self {
            InvarianceClass::SOn1 => 1,
            InvarianceClass::SOn2 => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Term {
    coeff: f64,
    wave: Vec<f64>,
    phase: f64,
    monomial: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestFunctionFamily {
    pub kind: TestFunctionKind,
    pub dim: usize,
    pub degree: usize,
    pub seed: u64,
    pub class: Option<InvarianceClass>,
    terms: Vec<Term>,
}

impl TestFunctionFamily {
    pub fn random(kind: TestFunctionKind, dim: usize, degree: usize, seed: u64) -> Self {
        Self::build(kind, dim, degree, seed, None)
    }

    pub fn invariant(
        kind: TestFunctionKind,
        dim: usize,
        degree: usize,
        seed: u64,
        class: InvarianceClass,
    ) -> Self {
        Self::build(kind, dim, degree, seed, Some(class))
    }

    fn build(
        kind: TestFunctionKind,
        dim: usize,
        degree: usize,
        seed: u64,
        class: Option<InvarianceClass>,
    ) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = dim;
        // entries the monomials may use
        let (rows, cols): (usize, Vec<usize>) = match kind {
            TestFunctionKind::GroupMatrixPoly => {
                let mut c: Vec<usize> = match class {
                    Some(cl) => (0..cl.free_columns().min(n)).collect(),
                    None => (0..n).collect(),
                };
                c.push(n);
                (n + 1, c)
            }
            _ => (
                n,
                match class {
                    Some(cl) => (0..cl.free_columns().min(n)).collect(),
                    None => (0..n).collect(),
                },
            ),
        };
        let scale = 1.0 / (TERMS as f64).sqrt();
        let terms = (0..TERMS)
            .map(|t| {
                let coeff = rng.sample::<f64, _>(StandardNormal) * scale;
                let wave = (0..n)
                    .map(|_| match kind {
                        TestFunctionKind::TorusTrigPoly => {
                            rng.random_range(-(degree as i64)..=degree as i64) as f64
                        }
                        TestFunctionKind::ChartBump => rng.random_range(-1.0..1.0) * degree as f64,
                        TestFunctionKind::GroupMatrixPoly => 0.0,
                    })
                    .collect();
                let phase = rng.random_range(0.0..std::f64::consts::TAU);
                // every member has at least one term depending on the fiber
                let deg = if t == 0 {
                    degree.max(1)
                } else {
                    rng.random_range(0..=degree)
                };
                let monomial = (0..deg)
                    .map(|_| (rng.random_range(0..rows), cols[rng.random_range(0..cols.len())]))
                    .collect();
                Term {
                    coeff,
                    wave,
                    phase,
                    monomial,
                }
            })
            .collect();
        TestFunctionFamily {
            kind,
            dim,
            degree,
            seed,
            class,
            terms,
        }
    }

    /// Stable label such as `torus_trig_poly(deg=2,seed=7)`.
    pub fn describe(&self) -> String {
        match self.class {
            Some(c) => format!(
                "{}(deg={},seed={},class={})",
                self.kind.name(),
                self.degree,
                self.seed,
                c.name()
            ),
            None => format!("{}(deg={},seed={})", self.kind.name(), self.degree, self.seed),
        }
    }
}

fn monomial<T: Real>(m: &[(usize, usize)], entry: impl Fn(usize, usize) -> T) -> T {
    m.iter().fold(T::one(), |acc, &(i, j)| acc * entry(i, j))
}

impl GenericField for TestFunctionFamily {
    fn eval_generic<T: Real>(&self, model: &MetricModel, w: &FrameState<T>) -> T {
        match self.kind {
            TestFunctionKind::TorusTrigPoly => {
                let periods = model.periods();
                let mut acc = T::zero();
                for t in &self.terms {
                    let mut arg = T::cst(t.phase);
                    for (i, &k) in t.wave.iter().enumerate() {
                        if k != 0.0 {
                            arg += w.x[i] * (std::f64::consts::TAU * k / periods[i]);
                        }
                    }
                    acc += arg.cos() * monomial(&t.monomial, |i, j| w.a[(i, j)]) * t.coeff;
                }
                acc
            }
            TestFunctionKind::GroupMatrixPoly => {
                let q = group_matrix_t(model, w.chart, &w.x, &w.a);
                let mut acc = T::zero();
                for t in &self.terms {
                    acc += monomial(&t.monomial, |i, j| q[(i, j)]) * t.coeff;
                }
                acc
            }
            TestFunctionKind::ChartBump => {
                let s = w.x.iter().fold(T::zero(), |acc, &v| acc + v * v);
                let r2 = BUMP_RADIUS * BUMP_RADIUS;
                if s.value() >= r2 {
                    return T::zero();
                }
                // ψ = exp(1 − 1/(1 − |x|²/ρ²)), normalized so ψ(0) = 1
                let psi = ((-s / r2 + 1.0).recip() * -1.0 + 1.0).exp();
                let mut acc = T::zero();
                for t in &self.terms {
                    let mut arg = T::cst(t.phase);
                    for (i, &k) in t.wave.iter().enumerate() {
                        arg += w.x[i] * k;
                    }
                    acc += arg.cos() * monomial(&t.monomial, |i, j| w.a[(i, j)]) * t.coeff;
                }
                psi * acc
            }
        }
    }
}
