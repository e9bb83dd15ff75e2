//! Liouville sampling and Monte Carlo integration on the closed model frame
//! bundles `Tⁿ × SO(n)` and `FM(Sⁿ) ≅ SO(n+1)`, with the measure normalized
//! to a probability measure.
//!
//! Randomness comes from ChaCha20 seeded by `seed`; sample `k` lives in chunk
//! `k / CHUNK` and is drawn from stream `k / CHUNK` of that generator. Chunks
//! are accumulated independently (Welford) and merged in chunk order, so
//! results are bit-identical for any number of worker threads.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::frame_bundle::{frame_from_group_matrix, FramePoint};
use crate::jets::ScalarField;
use crate::linalg::Mat;
use crate::manifold::{ChartPoint, MetricModel, ModelKind, BALL_SAMPLING_RADIUS};
use crate::operators::TwoFormField;

/// Samples per chunk of the fixed reduction tree.
pub const CHUNK: usize = 1 << 16;
/// Name of the generator, echoed into reports.
pub const RNG_ALGORITHM: &str = "chacha20";

/// Deterministic generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Haar-distributed rotation: QR of a Gaussian matrix with the signs of
/// `R`'s diagonal folded into `Q`, then the first column flipped if needed
/// to land in `SO(n)`.
pub fn haar_so<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Mat<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    Mat::from_na(&q)
}

/// Uniform point of the centered ball of radius `radius` in `ℝⁿ`.
fn uniform_ball<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Vec<f64> {
    let dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
    dir.into_iter().map(|v| v * r / norm).collect()
}

/// One random frame. On the closed models this is a Liouville sample; on
/// the hyperbolic models `x` is uniform (in chart coordinates) in the ball of
/// radius [`BALL_SAMPLING_RADIUS`] and `a` is Haar.
pub fn sample_frame<R: Rng + ?Sized>(model: &MetricModel, rng: &mut R) -> FramePoint {
    let n = model.dim;
    match model.kind {
        ModelKind::FlatTorus => {
            let x = model
                .periods()
                .iter()
                .map(|&l| l * rng.random::<f64>())
                .collect();
            FramePoint::new(ChartPoint::new(0, x), haar_so(n, rng))
        }
        ModelKind::RoundSphere => {
            let q = haar_so(n + 1, rng);
            frame_from_group_matrix(model, &q).expect("group matrix of the right size")
        }
        ModelKind::HyperbolicBall | ModelKind::PerturbedHyperbolic => {
            let x = uniform_ball(n, BALL_SAMPLING_RADIUS, rng);
            FramePoint::new(ChartPoint::new(0, x), haar_so(n, rng))
        }
    }
}

/// A reproducible stream of Liouville samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleStream {
    pub model: MetricModel,
    pub seed: u64,
    pub count: usize,
}

impl SampleStream {
    pub fn chunks(&self) -> usize {
        self.count.div_ceil(CHUNK)
    }

    /// Samples `c·CHUNK ..` up to the end of chunk `c`.
    pub fn chunk(&self, c: usize) -> Vec<FramePoint> {
        let len = CHUNK.min(self.count - c * CHUNK);
        let mut rng = stream_rng(self.seed, c as u64);
        (0..len).map(|_| sample_frame(&self.model, &mut rng)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = FramePoint> + '_ {
        (0..self.chunks()).flat_map(move |c| self.chunk(c))
    }
}

/// Liouville samples on a closed model.
pub fn sample_liouville(model: &MetricModel, seed: u64, count: usize) -> Result<SampleStream> {
    if !model.is_closed() {
        return Err(GeometryError::UnsupportedModel(format!(
            "Liouville sampling needs a closed model, got {}",
            model.label()
        )));
    }
    model.validate()?;
    Ok(SampleStream {
        model: model.clone(),
        seed,
        count,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub stderr: f64,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, Default)]
struct Welford {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        let d = v - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (v - self.mean);
    }

    /// Chan et al. pairwise merge.
    fn merge(&mut self, o: &Welford) {
        if o.n == 0.0 {
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    fn estimate(&self) -> McEstimate {
        let count = self.n as usize;
        let stderr = if count > 1 {
            (self.m2 / (self.n - 1.0)).sqrt() / self.n.sqrt()
        } else {
            0.0
        };
        McEstimate {
            value: self.mean,
            stderr,
            count,
        }
    }
}

/// Mean and standard error of each component of a vector-valued sample
/// function over `count` Liouville samples.
pub fn integrate_vec<F>(
    model: &MetricModel,
    seed: u64,
    count: usize,
    width: usize,
    f: F,
) -> Result<Vec<McEstimate>>
where
    F: Fn(&FramePoint) -> Result<Vec<f64>> + Sync,
{
    if count == 0 {
        return Err(GeometryError::DegenerateInput("sample count must be positive".into()));
    }
    let stream = sample_liouville(model, seed, count)?;
    let parts: Vec<Result<Vec<Welford>>> = (0..stream.chunks())
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Welford::default(); width];
            for (k, w) in stream.chunk(c).iter().enumerate() {
                let index = c * CHUNK + k;
                let v = f(w)?;
                if v.len() != width {
                    return Err(GeometryError::DegenerateInput(format!(
                        "sample function returned {} values, expected {width}",
                        v.len()
                    )));
                }
                if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                    return Err(GeometryError::Data {
                        index,
                        detail: format!("integrand evaluated to {bad}"),
                    });
                }
                for (a, &x) in acc.iter_mut().zip(&v) {
                    a.push(x);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![Welford::default(); width];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part?) {
            t.merge(&p);
        }
    }
    Ok(total.iter().map(Welford::estimate).collect())
}

/// `∫ f dμ` over the normalized Liouville measure.
pub fn integrate(model: &MetricModel, f: &dyn ScalarField, seed: u64, count: usize) -> Result<McEstimate> {
    let v = integrate_vec(model, seed, count, 1, |w| Ok(vec![f.eval(model, w)?]))?;
    Ok(v[0])
}

/// `∫ f·g dμ`.
pub fn l2_inner(
    model: &MetricModel,
    f: &dyn ScalarField,
    g: &dyn ScalarField,
    seed: u64,
    count: usize,
) -> Result<McEstimate> {
    let v = integrate_vec(model, seed, count, 1, |w| {
        Ok(vec![f.eval(model, w)? * g.eval(model, w)?])
    })?;
    Ok(v[0])
}

/// `Σ_{i<j} ∫ F_{ij} G_{ij} dμ`.
pub fn l2_inner_2form(
    model: &MetricModel,
    f: &TwoFormField,
    g: &TwoFormField,
    seed: u64,
    count: usize,
) -> Result<McEstimate> {
    let v = integrate_vec(model, seed, count, 1, |w| {
        Ok(vec![f.eval(model, w)?.inner(&g.eval(model, w)?)])
    })?;
    Ok(v[0])
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{Constant, FrameEntry, GenericField, Real, SinCoordinate};
    use crate::frame_bundle::{group_matrix, FrameState};

    #[test]
    fn haar_samples_are_rotations() {
        let mut rng = stream_rng(1, 0);
        for n in 2..5 {
            let q = haar_so(n, &mut rng);
            assert!(q.orthonormality_defect() < 1e-14);
            assert!((q.det() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_integrates_exactly() {
        let m = MetricModel::flat_torus(2);
        let e = integrate(&m, &Constant(2.5), 3, 5000).unwrap();
        assert_eq!(e.value, 2.5);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.count, 5000);
    }

    #[test]
    fn hyperbolic_sampling_is_unsupported() {
        let m = MetricModel::hyperbolic_ball(3);
        assert!(matches!(
            integrate(&m, &Constant(1.0), 0, 10),
            Err(GeometryError::UnsupportedModel(_))
        ));
    }

    #[test]
    fn haar_moments_on_the_torus() {
        let m = MetricModel::flat_torus(3);
        let e = integrate(&m, &FrameEntry(0, 0), 7, 100_000).unwrap();
        assert!(e.value.abs() <= 4.0 * e.stderr);
        let sq = l2_inner(&m, &FrameEntry(0, 0), &FrameEntry(0, 0), 7, 100_000).unwrap();
        assert!((sq.value - 1.0 / 3.0).abs() <= 4.0 * sq.stderr);
        let s = integrate(&m, &SinCoordinate(0), 8, 100_000).unwrap();
        assert!(s.value.abs() <= 4.0 * s.stderr);
    }

    struct QEntry(usize, usize);

    impl GenericField for QEntry {
        fn eval_generic<T: Real>(&self, model: &MetricModel, w: &FrameState<T>) -> T {
            crate::frame_bundle::group_matrix_t(model, w.chart, &w.x, &w.a)[(self.0, self.1)]
        }
    }

    #[test]
    fn sphere_samples_are_consistent_with_group_matrices() {
        let m = MetricModel::round_sphere(2, 1.0);
        let s = sample_liouville(&m, 4, 200).unwrap();
        for w in s.iter() {
            assert!(w.x.norm() <= 1.0 + 1e-12);
            assert!(w.invariant_defect(&m).unwrap() < 1e-12);
            assert!(group_matrix(&m, &w).unwrap().orthonormality_defect() < 1e-13);
        }
        let e = integrate(&m, &QEntry(2, 1), 11, 100_000).unwrap();
        assert!(e.value.abs() <= 4.0 * e.stderr);
    }

    #[test]
    fn reproducible_across_thread_counts() {
        let m = MetricModel::flat_torus(2);
        let f = FrameEntry(1, 0);
        let count = 3 * CHUNK + 17;
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| integrate(&m, &f, 99, count).unwrap())
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn non_finite_values_name_the_sample() {
        let m = MetricModel::flat_torus(2);
        let e = integrate_vec(&m, 0, 100, 1, |w| {
            Ok(vec![if w.x.coords[0] > 3.0 { f64::NAN } else { 1.0 }])
        });
        assert!(matches!(e, Err(GeometryError::Data { .. })));
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((loglog_slope(&xs, &ys) + 0.5).abs() < 1e-12);
    }
}
