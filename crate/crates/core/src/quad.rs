//! Adaptive Gauss–Kronrod quadrature for integrands with known algebraic
//! singularities.
//!
//! Every interval is cut at the supplied singular points and each piece is
//! parameterised from its nearest singular point, so the integrand always
//! receives the exact signed offset to that point (no cancellation when the
//! point sits far from the origin). Next to a point carrying an exponent
//! `γ < 0` the offset is substituted as `offset = t^k` with `k = 1/(γ+1)`,
//! which turns a `|x - p|^γ` factor into a constant and leaves Gauss–Kronrod
//! with a bounded integrand.
//!
//! ```
//! use lmagg::quad::{integrate, QuadOptions, SingularPoint};
//!
//! // ∫_0^1 x^{-0.9} dx = 10
//! let pts = [SingularPoint::new(0.0, -0.9)];
//! let est = integrate(
//!     |at| Ok(at.relative_to(0, 0.0).abs().powf(-0.9)),
//!     0.0,
//!     1.0,
//!     &pts,
//!     &[],
//!     &QuadOptions::default(),
//! )
//! .unwrap();
//! assert!((est.value - 10.0).abs() < 1e-9);
//! ```

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

/// Values a quadrature can accumulate.
pub trait QuadValue:
    Copy + Debug + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn magnitude(&self) -> f64;
    fn finite(&self) -> bool;
}

impl QuadValue for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn finite(&self) -> bool {
        self.is_finite()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("adaptive quadrature exhausted {intervals} intervals (estimate {estimate:e}, error {error:e})")]
    NonConvergent {
        estimate: f64,
        error: f64,
        intervals: usize,
    },
    #[error("integrand is not finite at x = {x}")]
    NonFinite { x: f64 },
    #[error("integral diverges: {0}")]
    Divergent(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_max_intervals(mut self, max_intervals: usize) -> Self {
        self.max_intervals = max_intervals;
        self
    }
}

/// A point where the integrand behaves like `|x - at|^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPoint {
    pub at: f64,
    pub exponent: f64,
}

impl SingularPoint {
    pub fn new(at: f64, exponent: f64) -> Self {
        Self { at, exponent }
    }
}

/// Which reference point an evaluation was parameterised from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    /// Index into the caller's singular point slice.
    Point(usize),
    Lower,
    Upper,
}

/// Evaluation site handed to the integrand: `x ≈ anchor + offset`, with
/// `offset` exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Locus {
    pub x: f64,
    pub anchor: Anchor,
    pub offset: f64,
}

impl Locus {
    /// Signed `x - at` for the singular point `index` located at `at`; exact
    /// when this evaluation is anchored at that point.
    pub fn relative_to(&self, index: usize, at: f64) -> f64 {
        if self.anchor == Anchor::Point(index) {
            self.offset
        } else {
            self.x - at
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

// Substitution powers above this underflow too early in t-space; exponents
// below about -0.97 lose mass below f64::MIN_POSITIVE.
const MAX_POWER: f64 = 30.0;

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// One half-segment hanging off an anchor, integrated in the t-variable.
#[derive(Debug, Clone, Copy)]
struct Half {
    anchor: Anchor,
    pos: f64,
    dir: f64,
    power: f64,
}

impl Half {
    fn offset(&self, t: f64) -> f64 {
        if self.power == 1.0 {
            t
        } else {
            t.powf(self.power)
        }
    }

    fn jacobian(&self, t: f64) -> f64 {
        if self.power == 1.0 {
            1.0
        } else {
            self.power * t.powf(self.power - 1.0)
        }
    }

    fn t_of(&self, offset: f64) -> f64 {
        if self.power == 1.0 {
            offset
        } else {
            offset.powf(1.0 / self.power)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece<T> {
    half: usize,
    t0: f64,
    t1: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Piece<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T> Eq for Piece<T> {}
impl<T> PartialOrd for Piece<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for Piece<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<T, F>(f: &mut F, half: &Half, t0: f64, t1: f64) -> Result<(T, f64), QuadError>
where
    T: QuadValue,
    F: FnMut(Locus) -> Result<T, QuadError>,
{
    let center = 0.5 * (t0 + t1);
    let radius = 0.5 * (t1 - t0);
    let mut eval = |t: f64| -> Result<T, QuadError> {
        let offset = half.offset(t);
        if offset < f64::MIN_POSITIVE {
            return Ok(T::default());
        }
        let locus = Locus {
            x: half.pos + half.dir * offset,
            anchor: half.anchor,
            offset: half.dir * offset,
        };
        let v = f(locus)? * half.jacobian(t);
        if v.finite() {
            Ok(v)
        } else {
            Err(QuadError::NonFinite { x: locus.x })
        }
    };

    let fc = eval(center)?;
    let mut res_k = fc * WGK[10];
    let mut res_g = T::default();
    let mut abs_k = fc.magnitude() * WGK[10];
    let mut values = [T::default(); 21];
    values[20] = fc;
    for j in 0..10 {
        let dx = radius * XGK[j];
        let lo = eval(center - dx)?;
        let hi = eval(center + dx)?;
        values[2 * j] = lo;
        values[2 * j + 1] = hi;
        res_k = res_k + (lo + hi) * WGK[j];
        abs_k += (lo.magnitude() + hi.magnitude()) * WGK[j];
        if j % 2 == 1 {
            res_g = res_g + (lo + hi) * WG[j / 2];
        }
    }
    let mean = res_k * 0.5;
    let mut asc = (fc - mean).magnitude() * WGK[10];
    for j in 0..10 {
        asc += ((values[2 * j] - mean).magnitude() + (values[2 * j + 1] - mean).magnitude()) * WGK[j];
    }
    let value = res_k * radius;
    let abs_k = abs_k * radius.abs();
    let asc = asc * radius.abs();
    let mut err = ((res_k - res_g) * radius).magnitude();
    if asc != 0.0 && err != 0.0 {
        err = asc * (1.0f64).min((200.0 * err / asc).powf(1.5));
    }
    if abs_k > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs_k);
    }
    Ok((value, err))
}

/// Integrates `f` over `[a, b]` given the algebraic singular points of the
/// integrand and extra breakpoints where it has structure (peaks, kinks).
///
/// Singular points outside `[a, b]` are ignored; a point at `a` or `b`
/// marks that endpoint singular. Exponents at or below `-1` are rejected as
/// divergent.
pub fn integrate<T, F>(
    mut f: F,
    a: f64,
    b: f64,
    points: &[SingularPoint],
    breakpoints: &[f64],
    opts: &QuadOptions,
) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: FnMut(Locus) -> Result<T, QuadError>,
{
    assert!(a < b, "integration interval must satisfy a < b (got [{a}, {b}])");
    if let Some(p) = points
        .iter()
        .find(|p| p.at >= a && p.at <= b && p.exponent <= -1.0)
    {
        return Err(QuadError::Divergent(format!(
            "exponent {} at x = {} is not integrable",
            p.exponent, p.at
        )));
    }

    // Anchors sorted by position: (position, exponent, anchor).
    let mut anchors: Vec<(f64, f64, Anchor)> = vec![(a, 0.0, Anchor::Lower), (b, 0.0, Anchor::Upper)];
    for (i, p) in points.iter().enumerate() {
        if p.at < a || p.at > b {
            continue;
        }
        if let Some(existing) = anchors.iter_mut().find(|an| an.0 == p.at) {
            if p.exponent < existing.1 || matches!(existing.2, Anchor::Lower | Anchor::Upper) {
                existing.1 = existing.1.min(p.exponent);
                existing.2 = Anchor::Point(i);
            }
        } else {
            anchors.push((p.at, p.exponent, Anchor::Point(i)));
        }
    }
    anchors.sort_by(|x, y| x.0.total_cmp(&y.0));

    let power_for = |gamma: f64| {
        if gamma < 0.0 {
            (1.0 / (gamma + 1.0)).min(MAX_POWER)
        } else {
            1.0
        }
    };

    let mut halves = Vec::new();
    let mut initial: Vec<(usize, f64, f64)> = Vec::new();
    for w in anchors.windows(2) {
        let (p, gp, ap) = w[0];
        let (q, gq, aq) = w[1];
        if q <= p {
            continue;
        }
        let mid = 0.5 * (p + q);
        let left = Half { anchor: ap, pos: p, dir: 1.0, power: power_for(gp) };
        let right = Half { anchor: aq, pos: q, dir: -1.0, power: power_for(gq) };
        for (half, lo, hi) in [(left, p, mid), (right, mid, q)] {
            let idx = halves.len();
            halves.push(half);
            let length = hi - lo;
            let t_end = half.t_of(length);
            let mut cuts: Vec<f64> = breakpoints
                .iter()
                .filter(|&&x| x > lo && x < hi)
                .map(|&x| half.t_of((x - half.pos).abs()))
                .filter(|&t| t > 0.0 && t < t_end)
                .collect();
            cuts.push(0.0);
            cuts.push(t_end);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            for c in cuts.windows(2) {
                if c[1] > c[0] {
                    initial.push((idx, c[0], c[1]));
                }
            }
        }
    }

    let mut heap = BinaryHeap::new();
    let mut total = T::default();
    let mut total_err = 0.0;
    let mut frozen_err = 0.0;
    let mut evaluations = 0;
    for (idx, t0, t1) in initial {
        let (value, error) = kronrod(&mut f, &halves[idx], t0, t1)?;
        evaluations += 21;
        total = total + value;
        total_err += error;
        heap.push(Piece { half: idx, t0, t1, value, error });
    }

    let mut count = heap.len();
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * total.magnitude());
        if total_err <= tol {
            break;
        }
        let Some(worst) = heap.pop() else {
            // every remaining piece is too narrow to split
            if frozen_err <= 10.0 * tol {
                break;
            }
            return Err(QuadError::NonConvergent {
                estimate: total.magnitude(),
                error: total_err,
                intervals: count,
            });
        };
        let mid = 0.5 * (worst.t0 + worst.t1);
        if mid <= worst.t0 || mid >= worst.t1 || (worst.t1 - worst.t0) <= 4.0 * f64::EPSILON * worst.t1.abs() {
            frozen_err += worst.error;
            continue;
        }
        if count >= opts.max_intervals {
            return Err(QuadError::NonConvergent {
                estimate: total.magnitude(),
                error: total_err,
                intervals: count,
            });
        }
        let half = &halves[worst.half];
        let (v1, e1) = kronrod(&mut f, half, worst.t0, mid)?;
        let (v2, e2) = kronrod(&mut f, half, mid, worst.t1)?;
        evaluations += 42;
        count += 1;
        total = total - worst.value + v1 + v2;
        total_err += e1 + e2 - worst.error;
        heap.push(Piece { half: worst.half, t0: worst.t0, t1: mid, value: v1, error: e1 });
        heap.push(Piece { half: worst.half, t0: mid, t1: worst.t1, value: v2, error: e2 });
    }

    // Re-sum to shed drift from the incremental updates.
    let mut value = T::default();
    let mut error = frozen_err;
    for p in heap.iter() {
        value = value + p.value;
        error += p.error;
    }
    Ok(Estimate { value, error, evaluations })
}

/// Integrates a plain function of `x` over `[a, b]` with no singular points.
pub fn integrate_smooth<T, F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    integrate(|at: Locus| Ok(f(at.x)), a, b, &[], &[], opts)
}

/// `∫_a^∞ f(x) dx` for `a > 0` and `f(x) = O(x^{-decay})`, `decay > 1`.
///
/// Uses `x = 1/s`; the transformed integrand behaves like `s^{decay-2}`
/// near `s = 0`.
pub fn integrate_tail<T, F>(mut f: F, a: f64, decay: f64, opts: &QuadOptions) -> Result<Estimate<T>, QuadError>
where
    T: QuadValue,
    F: FnMut(f64) -> T,
{
    assert!(a > 0.0);
    if decay <= 1.0 {
        return Err(QuadError::Divergent(format!("tail decay exponent {decay} <= 1")));
    }
    let pts = [SingularPoint::new(0.0, decay - 2.0)];
    integrate(
        |at: Locus| {
            let s = at.relative_to(0, 0.0);
            let x = 1.0 / s;
            // one factor at a time: x² alone overflows for s < 1e-154
            Ok(f(x) * x * x)
        },
        0.0,
        1.0 / a,
        &pts,
        &[],
        opts,
    )
}
