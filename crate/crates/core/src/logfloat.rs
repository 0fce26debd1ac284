//! Sign-magnitude floating point with configurable mantissa/exponent
//! widths, plus exact iterated arithmetic.
//!
//! A value is a pair `(m, e)` of bounded signed integers representing
//! `m * 2^(e - |m| + 1)` where `|m|` is the bit length of the mantissa.
//! Nonzero mantissas are kept normalized to exactly `mantissa_bits` bits
//! (top bit set), which makes the representation of each representable
//! value unique and pins `e` to the floor of the value's base-2 logarithm.
//! Zero is canonically `(0, 0)`.
//!
//! Iterated sums and products are computed exactly: the inputs are scaled
//! to big integers, combined with exact integer arithmetic, rescaled by a
//! power of two, and cast back to the profile with a single rounding step.
//! The same scheme powers matrix powering. Nonlinearities are evaluated by
//! rescaling the argument into `(-1, 1)` and summing a convergent series
//! in exact rational arithmetic until the truncation error drops below a
//! requested power of two.

use num::{BigInt, BigRational, One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LogFloatError {
    #[error("profile mismatch between operands")]
    ProfileMismatch,
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("too many factors: {got} > {max}")]
    TooManyFactors { got: usize, max: usize },
    #[error("matrix is not diagonal")]
    NonDiagonal,
    #[error("zero diagonal entry at {0}")]
    ZeroDiagonalEntry(usize),
    #[error("argument outside domain: {0}")]
    DomainViolation(String),
}

/// Exact dyadic/rational scalar used as the reference arithmetic.
pub type ExactRational = BigRational;

/// Bit widths for the mantissa and exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Profile {
    pub mantissa_bits: u32,
    pub exponent_bits: u32,
}

impl Profile {
    /// Log-precision-flavored default: 12 mantissa bits, 8 exponent bits.
    pub const DEFAULT: Profile = Profile { mantissa_bits: 12, exponent_bits: 8 };

    pub fn new(mantissa_bits: u32, exponent_bits: u32) -> Result<Self, LogFloatError> {
        if !(2..=62).contains(&mantissa_bits) {
            return Err(LogFloatError::InvalidProfile(format!(
                "mantissa_bits {mantissa_bits} outside 2..=62"
            )));
        }
        if !(2..=30).contains(&exponent_bits) {
            return Err(LogFloatError::InvalidProfile(format!(
                "exponent_bits {exponent_bits} outside 2..=30"
            )));
        }
        Ok(Profile { mantissa_bits, exponent_bits })
    }

    pub fn max_exponent(&self) -> i64 {
        (1i64 << (self.exponent_bits - 1)) - 1
    }

    pub fn min_exponent(&self) -> i64 {
        -(1i64 << (self.exponent_bits - 1))
    }

    /// Largest representable mantissa magnitude (all bits set).
    fn max_mantissa(&self) -> i64 {
        (1i64 << self.mantissa_bits) - 1
    }

    fn min_normal_mantissa(&self) -> i64 {
        1i64 << (self.mantissa_bits - 1)
    }
}

/// Rounding/saturation record attached to a cast result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CastFlags {
    /// The exact value was not representable and was rounded.
    pub inexact: bool,
    /// The exponent overflowed and the value saturated to the largest
    /// representable magnitude.
    pub saturated: bool,
    /// The exponent underflowed and the value flushed to zero.
    pub underflowed: bool,
}

impl CastFlags {
    fn merge(self, other: CastFlags) -> CastFlags {
        CastFlags {
            inexact: self.inexact || other.inexact,
            saturated: self.saturated || other.saturated,
            underflowed: self.underflowed || other.underflowed,
        }
    }
}

/// A cast result together with what happened during rounding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cast {
    pub value: LogFloat,
    pub flags: CastFlags,
}

/// Normalized sign-magnitude float under a [`Profile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogFloat {
    mantissa: i64,
    exponent: i64,
    profile: Profile,
}

impl LogFloat {
    pub fn zero(profile: Profile) -> LogFloat {
        LogFloat { mantissa: 0, exponent: 0, profile }
    }

    pub fn one(profile: Profile) -> LogFloat {
        cast_to_float(&ExactRational::one(), profile).value
    }

    pub fn mantissa(&self) -> i64 {
        self.mantissa
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn is_zero(&self) -> bool {
        self.mantissa == 0
    }

    /// Power of two multiplying the integer mantissa: `e - |m| + 1`.
    /// A non-negative scale exponent means the value is an integer.
    pub fn scale_exponent(&self) -> i64 {
        self.exponent - self.profile.mantissa_bits as i64 + 1
    }

    /// Exact value as a rational.
    pub fn to_rational(&self) -> ExactRational {
        if self.is_zero() {
            return ExactRational::zero();
        }
        ExactRational::from(BigInt::from(self.mantissa)) * pow2(self.scale_exponent())
    }

    /// Value spacing at this float's exponent: one unit in the last place.
    pub fn ulp(&self) -> ExactRational {
        pow2(self.scale_exponent())
    }

    pub fn to_f64(&self) -> f64 {
        self.mantissa as f64 * 2f64.powi(self.scale_exponent() as i32)
    }

    /// Exact conversion from an `f64` (every finite `f64` is dyadic).
    pub fn from_f64(x: f64, profile: Profile) -> Cast {
        let r = BigRational::from_float(x).expect("finite float");
        cast_to_float(&r, profile)
    }
}

/// `2^k` as an exact rational for any sign of `k`.
pub fn pow2(k: i64) -> ExactRational {
    if k >= 0 {
        ExactRational::from(BigInt::one() << k as usize)
    } else {
        ExactRational::new(BigInt::one(), BigInt::one() << (-k) as usize)
    }
}

/// Floor of the base-2 logarithm of a positive rational.
fn floor_log2(x: &ExactRational) -> i64 {
    assert!(x.is_positive(), "floor_log2 of non-positive value");
    let bn = x.numer().bits() as i64;
    let bd = x.denom().bits() as i64;
    let cand = bn - bd;
    // x lies in (2^(cand-1), 2^(cand+1)); decide which half.
    let ge = if cand >= 0 {
        *x.numer() >= (x.denom() << cand as usize)
    } else {
        (x.numer() << (-cand) as usize) >= *x.denom()
    };
    if ge {
        cand
    } else {
        cand - 1
    }
}

/// Rounds an exact rational to the nearest representable float, ties to
/// even mantissa. Exponent overflow saturates to the largest magnitude;
/// underflow flushes to zero. Both are flagged, not fatal.
pub fn cast_to_float(x: &ExactRational, profile: Profile) -> Cast {
    if x.is_zero() {
        return Cast { value: LogFloat::zero(profile), flags: CastFlags::default() };
    }
    let negative = x.is_negative();
    let abs = x.abs();
    let mut e = floor_log2(&abs);
    let pm = profile.mantissa_bits as i64;
    // Scale so the integer part has exactly mantissa_bits bits, then round.
    let shift = pm - 1 - e;
    let (num, den) = if shift >= 0 {
        (abs.numer() << shift as usize, abs.denom().clone())
    } else {
        (abs.numer().clone(), abs.denom() << (-shift) as usize)
    };
    let (mut q, r) = num_integer::div_rem_big(&num, &den);
    let inexact = !r.is_zero();
    let twice_r: BigInt = &r << 1usize;
    match twice_r.cmp(&den) {
        std::cmp::Ordering::Greater => q += 1,
        std::cmp::Ordering::Equal => {
            if q.bit(0) {
                q += 1;
            }
        }
        std::cmp::Ordering::Less => {}
    }
    if q.bits() as i64 > pm {
        // Rounding rolled over to the next power of two.
        q >>= 1;
        e += 1;
    }
    if e > profile.max_exponent() {
        let m = profile.max_mantissa();
        return Cast {
            value: LogFloat {
                mantissa: if negative { -m } else { m },
                exponent: profile.max_exponent(),
                profile,
            },
            flags: CastFlags { inexact: true, saturated: true, underflowed: false },
        };
    }
    if e < profile.min_exponent() {
        return Cast {
            value: LogFloat::zero(profile),
            flags: CastFlags { inexact: true, saturated: false, underflowed: true },
        };
    }
    let mut m: i64 = i64::try_from(&q).expect("mantissa fits i64");
    debug_assert!(m >= profile.min_normal_mantissa() && m <= profile.max_mantissa());
    if negative {
        m = -m;
    }
    Cast {
        value: LogFloat { mantissa: m, exponent: e, profile },
        flags: CastFlags { inexact, saturated: false, underflowed: false },
    }
}

// num-integer's div_rem on references, kept local to avoid pulling the
// trait into every signature.
mod num_integer {
    use num::{BigInt, Integer};

    pub fn div_rem_big(a: &BigInt, b: &BigInt) -> (BigInt, BigInt) {
        a.div_rem(b)
    }
}

fn require_shared_profile(values: &[LogFloat]) -> Result<Profile, LogFloatError> {
    let profile = values.first().map(|v| v.profile).unwrap_or(Profile::DEFAULT);
    if values.iter().any(|v| v.profile != profile) {
        return Err(LogFloatError::ProfileMismatch);
    }
    Ok(profile)
}

/// Iterated sum: exact scaled-integer accumulation, then a single cast.
pub fn iterated_sum(values: &[LogFloat]) -> Result<Cast, LogFloatError> {
    let profile = require_shared_profile(values)?;
    let nonzero: Vec<&LogFloat> = values.iter().filter(|v| !v.is_zero()).collect();
    if nonzero.is_empty() {
        return Ok(Cast { value: LogFloat::zero(profile), flags: CastFlags::default() });
    }
    let min_scale = nonzero.iter().map(|v| v.scale_exponent()).min().unwrap();
    let mut acc = BigInt::zero();
    for v in &nonzero {
        let shift = (v.scale_exponent() - min_scale) as usize;
        acc += BigInt::from(v.mantissa) << shift;
    }
    let exact = ExactRational::from(acc) * pow2(min_scale);
    Ok(cast_to_float(&exact, profile))
}

/// Upper bound on the factor count accepted by [`iterated_product`] and
/// the power accepted by [`matrix_power`].
pub const MAX_ITERATED_LEN: usize = 4096;

/// Exponent headroom allowed to intermediate scaled values, as a multiple
/// of the profile's exponent width.
pub const DEFAULT_HEADROOM: u32 = 2;

/// Iterated product via integer scaling: all factors are shifted by a
/// common `2^q` so each becomes an integer, the big-integer product is
/// taken, the `2^(q*z)` scaling is undone by exponent subtraction, and the
/// result is cast once.
pub fn iterated_product(values: &[LogFloat]) -> Result<Cast, LogFloatError> {
    iterated_product_with_headroom(values, DEFAULT_HEADROOM)
}

pub fn iterated_product_with_headroom(
    values: &[LogFloat],
    headroom: u32,
) -> Result<Cast, LogFloatError> {
    let profile = require_shared_profile(values)?;
    if values.len() > MAX_ITERATED_LEN {
        return Err(LogFloatError::TooManyFactors { got: values.len(), max: MAX_ITERATED_LEN });
    }
    if values.is_empty() {
        return Ok(cast_to_float(&ExactRational::one(), profile));
    }
    if values.iter().any(LogFloat::is_zero) {
        return Ok(Cast { value: LogFloat::zero(profile), flags: CastFlags::default() });
    }
    let budget = exponent_budget(profile, headroom);
    let min_scale = values.iter().map(|v| v.scale_exponent()).min().unwrap();
    let q = 0.max(-min_scale);
    let z = values.len() as i64;
    let unscale = q.checked_mul(z);
    let over_budget = values.iter().any(|v| (v.scale_exponent() + q).abs() >= budget)
        || !matches!(unscale, Some(total) if total.abs() < budget);
    if over_budget {
        let negative = values.iter().filter(|v| v.mantissa < 0).count() % 2 == 1;
        let m = if negative { -profile.max_mantissa() } else { profile.max_mantissa() };
        return Ok(Cast {
            value: LogFloat { mantissa: m, exponent: profile.max_exponent(), profile },
            flags: CastFlags { inexact: true, saturated: true, underflowed: false },
        });
    }
    let mut product = BigInt::one();
    for v in values {
        let shifted = (v.scale_exponent() + q) as usize;
        product *= BigInt::from(v.mantissa) << shifted;
    }
    let exact = ExactRational::from(product) * pow2(-unscale.unwrap());
    Ok(cast_to_float(&exact, profile))
}

fn exponent_budget(profile: Profile, headroom: u32) -> i64 {
    let bits = (profile.exponent_bits * headroom).min(62);
    1i64 << (bits - 1)
}

/// Square matrix of floats sharing one profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogFloatMat {
    dim: usize,
    entries: Vec<LogFloat>,
}

impl LogFloatMat {
    pub fn new(dim: usize, entries: Vec<LogFloat>) -> Result<Self, LogFloatError> {
        if entries.len() != dim * dim {
            return Err(LogFloatError::InvalidProfile("matrix entry count mismatch".into()));
        }
        require_shared_profile(&entries)?;
        Ok(LogFloatMat { dim, entries })
    }

    pub fn identity(dim: usize, profile: Profile) -> Self {
        let one = LogFloat::one(profile);
        let zero = LogFloat::zero(profile);
        let mut entries = vec![zero; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = one;
        }
        LogFloatMat { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> LogFloat {
        self.entries[r * self.dim + c]
    }

    pub fn entries(&self) -> &[LogFloat] {
        &self.entries
    }

    fn profile(&self) -> Profile {
        self.entries[0].profile
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|r| {
            (0..self.dim).all(|c| r == c || self.entries[r * self.dim + c].is_zero())
        })
    }
}

/// `M^z` via the same scale-to-integers trick as [`iterated_product`]:
/// every entry is scaled by a common `2^q`, the integer matrix power is
/// computed exactly by repeated squaring, the `2^(q*z)` factor is removed
/// per entry, and each entry is cast once.
pub fn matrix_power(m: &LogFloatMat, z: u32) -> Result<(LogFloatMat, CastFlags), LogFloatError> {
    matrix_power_with_headroom(m, z, DEFAULT_HEADROOM)
}

pub fn matrix_power_with_headroom(
    m: &LogFloatMat,
    z: u32,
    headroom: u32,
) -> Result<(LogFloatMat, CastFlags), LogFloatError> {
    let profile = m.profile();
    if z as usize > MAX_ITERATED_LEN {
        return Err(LogFloatError::TooManyFactors { got: z as usize, max: MAX_ITERATED_LEN });
    }
    if z == 0 {
        return Ok((LogFloatMat::identity(m.dim, profile), CastFlags::default()));
    }
    let budget = exponent_budget(profile, headroom);
    let nonzero_scales: Vec<i64> =
        m.entries.iter().filter(|v| !v.is_zero()).map(|v| v.scale_exponent()).collect();
    if nonzero_scales.is_empty() {
        let zero = LogFloat::zero(profile);
        return Ok((
            LogFloatMat { dim: m.dim, entries: vec![zero; m.dim * m.dim] },
            CastFlags::default(),
        ));
    }
    let min_scale = nonzero_scales.iter().copied().min().unwrap();
    let q = 0.max(-min_scale);
    let unscale = q * z as i64;
    let over_budget = unscale.abs() >= budget
        || nonzero_scales.iter().any(|s| (s + q).abs() >= budget);
    if over_budget {
        let saturated = LogFloat {
            mantissa: profile.max_mantissa(),
            exponent: profile.max_exponent(),
            profile,
        };
        return Ok((
            LogFloatMat { dim: m.dim, entries: vec![saturated; m.dim * m.dim] },
            CastFlags { inexact: true, saturated: true, underflowed: false },
        ));
    }
    let ints: Vec<BigInt> = m
        .entries
        .iter()
        .map(|v| {
            if v.is_zero() {
                BigInt::zero()
            } else {
                BigInt::from(v.mantissa) << (v.scale_exponent() + q) as usize
            }
        })
        .collect();
    let powered = int_matrix_power(&ints, m.dim, z);
    let mut flags = CastFlags::default();
    let entries: Vec<LogFloat> = powered
        .iter()
        .map(|n| {
            let exact = ExactRational::from(n.clone()) * pow2(-unscale);
            let cast = cast_to_float(&exact, profile);
            flags = flags.merge(cast.flags);
            cast.value
        })
        .collect();
    Ok((LogFloatMat { dim: m.dim, entries }, flags))
}

fn int_matmul(a: &[BigInt], b: &[BigInt], d: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); d * d];
    for i in 0..d {
        for k in 0..d {
            let aik = &a[i * d + k];
            if aik.is_zero() {
                continue;
            }
            for j in 0..d {
                let prod = aik * &b[k * d + j];
                out[i * d + j] += prod;
            }
        }
    }
    out
}

fn int_matrix_power(m: &[BigInt], d: usize, z: u32) -> Vec<BigInt> {
    let mut result: Vec<BigInt> = {
        let mut id = vec![BigInt::zero(); d * d];
        for i in 0..d {
            id[i * d + i] = BigInt::one();
        }
        id
    };
    let mut base = m.to_vec();
    let mut exp = z;
    while exp > 0 {
        if exp & 1 == 1 {
            result = int_matmul(&result, &base, d);
        }
        exp >>= 1;
        if exp > 0 {
            base = int_matmul(&base, &base, d);
        }
    }
    result
}

/// Inverts a diagonal matrix by casting the exact reciprocal of each
/// diagonal entry.
pub fn reciprocal_diagonal(m: &LogFloatMat) -> Result<(LogFloatMat, CastFlags), LogFloatError> {
    if !m.is_diagonal() {
        return Err(LogFloatError::NonDiagonal);
    }
    let profile = m.profile();
    let mut flags = CastFlags::default();
    let mut entries = vec![LogFloat::zero(profile); m.dim * m.dim];
    for i in 0..m.dim {
        let entry = m.get(i, i);
        if entry.is_zero() {
            return Err(LogFloatError::ZeroDiagonalEntry(i));
        }
        let recip = entry.to_rational().recip();
        let cast = cast_to_float(&recip, profile);
        flags = flags.merge(cast.flags);
        entries[i * m.dim + i] = cast.value;
    }
    Ok((LogFloatMat { dim: m.dim, entries }, flags))
}

/// Nonlinearity selector for [`eval_nonlinearity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    Exp,
    Log,
    Softplus,
}

/// Default bound on the argument domain `(-B, B)`; a power of two so the
/// rescaling `y = x / B` is exact.
pub const DEFAULT_BOUND_LOG2: u32 = 4;

/// Evaluates `exp`, `log`, or `softplus` at `x` with truncation error
/// below `2^-target_bits`, then casts once at `x`'s profile. Total error
/// is at most `2^-target_bits` plus one rounding step.
pub fn eval_nonlinearity(
    f: Nonlinearity,
    x: &LogFloat,
    target_bits: u32,
) -> Result<Cast, LogFloatError> {
    eval_nonlinearity_bounded(f, x, target_bits, DEFAULT_BOUND_LOG2)
}

pub fn eval_nonlinearity_bounded(
    f: Nonlinearity,
    x: &LogFloat,
    target_bits: u32,
    bound_log2: u32,
) -> Result<Cast, LogFloatError> {
    let value = x.to_rational();
    let bound = pow2(bound_log2 as i64);
    if value.abs() >= bound {
        return Err(LogFloatError::DomainViolation(format!(
            "|x| >= 2^{bound_log2}"
        )));
    }
    if f == Nonlinearity::Log && !value.is_positive() {
        return Err(LogFloatError::DomainViolation("log requires x > 0".into()));
    }
    let result = eval_nonlinearity_rational(f, &value, target_bits, bound_log2);
    Ok(cast_to_float(&result, x.profile()))
}

/// Rational-in, rational-out evaluation used both by the float entry point
/// and by tests that want a higher-precision reference.
pub fn eval_nonlinearity_rational(
    f: Nonlinearity,
    x: &ExactRational,
    target_bits: u32,
    bound_log2: u32,
) -> ExactRational {
    // Rescale the argument into (-1, 1); the bound is a power of two so
    // this is exact, and the series below absorb the B factor into their
    // coefficients.
    let y = x * pow2(-(bound_log2 as i64));
    match f {
        Nonlinearity::Exp => exp_of_scaled(&y, bound_log2, target_bits + 1),
        Nonlinearity::Log => {
            let arg = y * pow2(bound_log2 as i64);
            ln_rational(&arg, target_bits + 1)
        }
        Nonlinearity::Softplus => {
            let e = exp_of_scaled(&y, bound_log2, target_bits + 2);
            let one_plus = ExactRational::one() + e;
            ln_rational(&one_plus, target_bits + 2)
        }
    }
}

/// `exp(B * y)` for `|y| < 1` via the Taylor series with coefficients
/// `B^n / n!`, truncated once the tail is provably below `2^-tol_bits`.
fn exp_of_scaled(y: &ExactRational, bound_log2: u32, tol_bits: u32) -> ExactRational {
    let x = y * pow2(bound_log2 as i64);
    let tol = pow2(-(tol_bits as i64));
    let abs_x_ceil: i64 = 1 << (bound_log2 + 1);
    let mut term = ExactRational::one();
    let mut sum = ExactRational::one();
    let mut n: i64 = 1;
    loop {
        term = term * &x / ExactRational::from(BigInt::from(n));
        sum += &term;
        // Once n exceeds 2|x|, successive terms at least halve, so the
        // remaining tail is below twice the last term.
        if n >= abs_x_ceil && term.abs() * ExactRational::from(BigInt::from(2)) < tol {
            break;
        }
        n += 1;
    }
    sum
}

/// Natural log of a positive rational: reduce to `u in [1, 2)` by a power
/// of two, then `ln u = 2 atanh((u-1)/(u+1))` with the odd series.
fn ln_rational(x: &ExactRational, tol_bits: u32) -> ExactRational {
    assert!(x.is_positive());
    let j = floor_log2(x);
    let u = x * pow2(-j);
    // Split the tolerance between the ln(u) series and j * ln(2).
    let ln_u = two_atanh(&ratio_shift(&u), tol_bits + 1);
    if j == 0 {
        return ln_u;
    }
    let extra = 64 - (j.unsigned_abs().leading_zeros());
    let ln2 = two_atanh(&ratio_shift(&ExactRational::from(BigInt::from(2))), tol_bits + 1 + extra);
    ln_u + ExactRational::from(BigInt::from(j)) * ln2
}

/// `(u - 1) / (u + 1)`, the atanh argument.
fn ratio_shift(u: &ExactRational) -> ExactRational {
    (u - ExactRational::one()) / (u + ExactRational::one())
}

/// `2 * atanh(t) = 2 * sum t^(2k+1) / (2k+1)` for `|t| < 1`, truncated
/// when the geometric tail bound drops below `2^-tol_bits`.
fn two_atanh(t: &ExactRational, tol_bits: u32) -> ExactRational {
    let tol = pow2(-(tol_bits as i64));
    let t2 = t * t;
    let one_minus_t2 = ExactRational::one() - &t2;
    let mut power = t.clone();
    let mut sum = t.clone();
    let mut k: i64 = 1;
    loop {
        power = power * &t2;
        let term = &power / ExactRational::from(BigInt::from(2 * k + 1));
        sum += &term;
        // Tail after this term is bounded by |t|^(2k+3) / ((2k+3)(1-t^2));
        // the factor of two from the final doubling is folded in.
        let bound = power.abs() * t2.abs()
            / (ExactRational::from(BigInt::from(2 * k + 3)) * &one_minus_t2);
        if bound * ExactRational::from(BigInt::from(2)) < tol {
            break;
        }
        k += 1;
    }
    sum * ExactRational::from(BigInt::from(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(m: u32, e: u32) -> Profile {
        Profile::new(m, e).unwrap()
    }

    fn random_float(rng: &mut ChaCha8Rng, profile: Profile, exp_range: std::ops::Range<i64>) -> LogFloat {
        let m_lo = 1i64 << (profile.mantissa_bits - 1);
        let m_hi = 1i64 << profile.mantissa_bits;
        let mut m = rng.gen_range(m_lo..m_hi);
        if rng.gen_bool(0.5) {
            m = -m;
        }
        let e = rng.gen_range(exp_range);
        LogFloat { mantissa: m, exponent: e, profile }
    }

    #[test]
    fn zero_casts_canonically() {
        let c = cast_to_float(&ExactRational::zero(), Profile::DEFAULT);
        assert!(c.value.is_zero());
        assert_eq!(c.value.mantissa(), 0);
        assert_eq!(c.value.exponent(), 0);
        assert!(!c.flags.inexact);
    }

    #[test]
    fn representable_values_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let profile = Profile::DEFAULT;
        for _ in 0..500 {
            let f = random_float(&mut rng, profile, -60..60);
            let back = cast_to_float(&f.to_rational(), profile);
            assert_eq!(back.value, f);
            assert!(!back.flags.inexact);
        }
    }

    #[test]
    fn one_is_exact() {
        let one = LogFloat::one(Profile::DEFAULT);
        assert_eq!(one.to_rational(), ExactRational::one());
        assert_eq!(one.exponent(), 0);
    }

    #[test]
    fn cast_one_third_error_bounded() {
        let profile = p(8, 8);
        let third = ExactRational::new(BigInt::one(), BigInt::from(3));
        let c = cast_to_float(&third, profile);
        assert!(c.flags.inexact);
        let err = (c.value.to_rational() - &third).abs();
        // Nearest rounding keeps the error within half an ulp; the spec
        // bound is a full ulp at the value's exponent.
        assert!(err <= pow2(c.value.exponent() - 8));
        // Exhaustive neighborhood check: no representable value is closer.
        let m = c.value.mantissa();
        for cand in [m - 1, m + 1] {
            let v = ExactRational::from(BigInt::from(cand)) * pow2(c.value.scale_exponent());
            assert!((v - &third).abs() >= err);
        }
    }

    #[test]
    fn ties_round_to_even_mantissa() {
        // With 4 mantissa bits the representable values around 16 step by
        // two, so odd integers there are exact ties.
        let profile = p(4, 8);
        let c17 = cast_to_float(&ExactRational::from(BigInt::from(17)), profile);
        assert!(c17.flags.inexact);
        assert_eq!(c17.value.to_rational(), ExactRational::from(BigInt::from(16)));
        assert_eq!(c17.value.mantissa() % 2, 0);
        let c19 = cast_to_float(&ExactRational::from(BigInt::from(19)), profile);
        assert_eq!(c19.value.to_rational(), ExactRational::from(BigInt::from(20)));
        assert_eq!(c19.value.mantissa() % 2, 0);
    }

    #[test]
    fn saturation_is_flagged() {
        let profile = p(6, 4); // exponents -8..=7
        let big = pow2(40);
        let c = cast_to_float(&big, profile);
        assert!(c.flags.saturated);
        assert_eq!(c.value.exponent(), profile.max_exponent());
        assert_eq!(c.value.mantissa(), profile.max_mantissa());
        let tiny = pow2(-40);
        let c = cast_to_float(&tiny, profile);
        assert!(c.flags.underflowed);
        assert!(c.value.is_zero());
    }

    #[test]
    fn monotone_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let num = BigInt::from(rng.gen_range(-100000i64..100000));
            let den = BigInt::from(rng.gen_range(1i64..100000));
            let x = ExactRational::new(num, den);
            let mut last_err: Option<ExactRational> = None;
            for bits in [4u32, 8, 12, 16, 24, 32] {
                let c = cast_to_float(&x, p(bits, 12));
                let err = (c.value.to_rational() - &x).abs();
                if let Some(prev) = last_err {
                    assert!(err <= prev, "error grew at {bits} bits for {x}");
                }
                last_err = Some(err);
            }
        }
    }

    #[test]
    fn iterated_sum_of_zeros_is_zero() {
        let profile = Profile::DEFAULT;
        let zeros = vec![LogFloat::zero(profile); 10];
        let c = iterated_sum(&zeros).unwrap();
        assert!(c.value.is_zero());
    }

    #[test]
    fn sum_of_value_and_negation_is_exact_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let f = random_float(&mut rng, Profile::DEFAULT, -30..30);
            let neg = LogFloat { mantissa: -f.mantissa(), ..f };
            let c = iterated_sum(&[f, neg]).unwrap();
            assert!(c.value.is_zero());
        }
    }

    #[test]
    fn iterated_sum_matches_rational_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let profile = Profile::DEFAULT;
        for _ in 0..1000 {
            let n = rng.gen_range(1..20);
            let values: Vec<LogFloat> =
                (0..n).map(|_| random_float(&mut rng, profile, -20..20)).collect();
            let fast = iterated_sum(&values).unwrap();
            let exact: ExactRational =
                values.iter().map(LogFloat::to_rational).fold(ExactRational::zero(), |a, b| a + b);
            let oracle = cast_to_float(&exact, profile);
            assert_eq!(fast.value, oracle.value);
        }
    }

    #[test]
    fn product_of_ones_is_one() {
        let profile = Profile::DEFAULT;
        let ones = vec![LogFloat::one(profile); 17];
        let c = iterated_product(&ones).unwrap();
        assert_eq!(c.value, LogFloat::one(profile));
    }

    #[test]
    fn product_with_zero_factor_is_zero() {
        let profile = Profile::DEFAULT;
        let mut values = vec![LogFloat::one(profile); 5];
        values[3] = LogFloat::zero(profile);
        assert!(iterated_product(&values).unwrap().value.is_zero());
    }

    #[test]
    fn iterated_product_matches_rational_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let profile = Profile::DEFAULT; // 12-bit mantissa
        for _ in 0..1000 {
            let z = rng.gen_range(1..=64);
            // Keep exponents small so products stay inside the profile.
            let values: Vec<LogFloat> =
                (0..z).map(|_| random_float(&mut rng, profile, -1..2)).collect();
            let fast = iterated_product(&values).unwrap();
            let exact: ExactRational =
                values.iter().map(LogFloat::to_rational).fold(ExactRational::one(), |a, b| a * b);
            let oracle = cast_to_float(&exact, profile);
            assert_eq!(fast.value, oracle.value, "z={z}");
        }
    }

    #[test]
    fn product_regrouping_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let profile = Profile::DEFAULT;
        for _ in 0..200 {
            let z = rng.gen_range(2..=24);
            let values: Vec<LogFloat> =
                (0..z).map(|_| random_float(&mut rng, profile, -1..2)).collect();
            let flat = iterated_product(&values).unwrap();
            // Random partition; partial products stay exact rationals and
            // only the final value is cast.
            let cut = rng.gen_range(1..z);
            let left: ExactRational = values[..cut]
                .iter()
                .map(LogFloat::to_rational)
                .fold(ExactRational::one(), |a, b| a * b);
            let right: ExactRational = values[cut..]
                .iter()
                .map(LogFloat::to_rational)
                .fold(ExactRational::one(), |a, b| a * b);
            let regrouped = cast_to_float(&(left * right), profile);
            assert_eq!(flat.value, regrouped.value);
        }
    }

    #[test]
    fn product_exponent_budget_saturates() {
        let profile = p(12, 4); // tiny exponent budget
        let big = cast_to_float(&pow2(7), profile).value;
        let factors = vec![big; 64];
        let c = iterated_product(&factors).unwrap();
        assert!(c.flags.saturated);
        assert_eq!(c.value.exponent(), profile.max_exponent());
    }

    #[test]
    fn matrix_power_identity_and_nilpotent() {
        let profile = Profile::DEFAULT;
        let id = LogFloatMat::identity(3, profile);
        let (p5, _) = matrix_power(&id, 5).unwrap();
        assert_eq!(p5, id);

        let zero = LogFloat::zero(profile);
        let one = LogFloat::one(profile);
        let nil = LogFloatMat::new(2, vec![zero, one, zero, zero]).unwrap();
        let (sq, _) = matrix_power(&nil, 2).unwrap();
        assert!(sq.entries().iter().all(LogFloat::is_zero));
    }

    #[test]
    fn diagonal_matrix_power_matches_scalar_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let profile = Profile::DEFAULT;
        for _ in 0..100 {
            let d = rng.gen_range(1..=4);
            let z = rng.gen_range(1..=16) as u32;
            let diag: Vec<LogFloat> =
                (0..d).map(|_| random_float(&mut rng, profile, -2..3)).collect();
            let mut entries = vec![LogFloat::zero(profile); d * d];
            for i in 0..d {
                entries[i * d + i] = diag[i];
            }
            let m = LogFloatMat::new(d, entries).unwrap();
            let (pw, _) = matrix_power(&m, z).unwrap();
            for i in 0..d {
                let scalar = iterated_product(&vec![diag[i]; z as usize]).unwrap();
                assert_eq!(pw.get(i, i), scalar.value);
            }
        }
    }

    #[test]
    fn matrix_power_matches_rational_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let profile = Profile::DEFAULT;
        for _ in 0..300 {
            let d = rng.gen_range(1..=4);
            let z = rng.gen_range(0..=32) as u32;
            let entries: Vec<LogFloat> = (0..d * d)
                .map(|_| {
                    if rng.gen_bool(0.2) {
                        LogFloat::zero(profile)
                    } else {
                        random_float(&mut rng, profile, -3..1)
                    }
                })
                .collect();
            let m = LogFloatMat::new(d, entries).unwrap();
            let (fast, _) = matrix_power(&m, z).unwrap();
            let oracle = rational_matrix_power(&m, z, profile);
            for (a, b) in fast.entries().iter().zip(&oracle) {
                assert_eq!(a, b, "d={d} z={z}");
            }
        }
    }

    fn rational_matrix_power(m: &LogFloatMat, z: u32, profile: Profile) -> Vec<LogFloat> {
        let d = m.dim();
        let mut result: Vec<ExactRational> = vec![ExactRational::zero(); d * d];
        for i in 0..d {
            result[i * d + i] = ExactRational::one();
        }
        let base: Vec<ExactRational> = m.entries().iter().map(LogFloat::to_rational).collect();
        for _ in 0..z {
            let mut next = vec![ExactRational::zero(); d * d];
            for i in 0..d {
                for k in 0..d {
                    if result[i * d + k].is_zero() {
                        continue;
                    }
                    for j in 0..d {
                        let term = &result[i * d + k] * &base[k * d + j];
                        next[i * d + j] += term;
                    }
                }
            }
            result = next;
        }
        result.iter().map(|x| cast_to_float(x, profile).value).collect()
    }

    #[test]
    fn reciprocal_of_powers_of_two_is_exact() {
        let profile = Profile::DEFAULT;
        let one = LogFloat::one(profile);
        let two = cast_to_float(&ExactRational::from(BigInt::from(2)), profile).value;
        let m = LogFloatMat::new(2, vec![one, LogFloat::zero(profile), LogFloat::zero(profile), two])
            .unwrap();
        let (r, flags) = reciprocal_diagonal(&m).unwrap();
        assert!(!flags.inexact);
        assert_eq!(r.get(0, 0).to_rational(), ExactRational::one());
        assert_eq!(r.get(1, 1).to_rational(), ExactRational::new(BigInt::one(), BigInt::from(2)));
    }

    #[test]
    fn reciprocal_of_three_within_one_ulp() {
        let profile = Profile::DEFAULT;
        let three = cast_to_float(&ExactRational::from(BigInt::from(3)), profile).value;
        let m = LogFloatMat::new(1, vec![three]).unwrap();
        let (r, _) = reciprocal_diagonal(&m).unwrap();
        let got = r.get(0, 0);
        let err = (got.to_rational() - ExactRational::new(BigInt::one(), BigInt::from(3))).abs();
        assert!(err <= got.ulp());
        // M * reciprocal(M) stays within one ulp of one.
        let prod = three.to_rational() * got.to_rational();
        assert!((prod - ExactRational::one()).abs() <= LogFloat::one(profile).ulp());
    }

    #[test]
    fn reciprocal_rejects_zero_and_non_diagonal() {
        let profile = Profile::DEFAULT;
        let one = LogFloat::one(profile);
        let zero = LogFloat::zero(profile);
        let with_zero = LogFloatMat::new(2, vec![one, zero, zero, zero]).unwrap();
        assert_eq!(reciprocal_diagonal(&with_zero).unwrap_err(), LogFloatError::ZeroDiagonalEntry(1));
        let dense = LogFloatMat::new(2, vec![one, one, zero, one]).unwrap();
        assert_eq!(reciprocal_diagonal(&dense).unwrap_err(), LogFloatError::NonDiagonal);
    }

    #[test]
    fn exp_of_zero_is_one() {
        let profile = p(30, 10);
        let zero = LogFloat::zero(profile);
        let c = eval_nonlinearity(Nonlinearity::Exp, &zero, 30).unwrap();
        assert_eq!(c.value.to_rational(), ExactRational::one());
    }

    #[test]
    fn softplus_of_zero_is_ln_two() {
        let profile = p(40, 10);
        let zero = LogFloat::zero(profile);
        let c = eval_nonlinearity(Nonlinearity::Softplus, &zero, 30).unwrap();
        let got = c.value.to_f64();
        assert!((got - std::f64::consts::LN_2).abs() < 2f64.powi(-29), "{got}");
    }

    #[test]
    fn exp_of_one_matches_reference() {
        let profile = p(40, 10);
        let one = LogFloat::one(profile);
        let c = eval_nonlinearity(Nonlinearity::Exp, &one, 30).unwrap();
        assert!((c.value.to_f64() - std::f64::consts::E).abs() < 2f64.powi(-29));
    }

    #[test]
    fn log_matches_reference() {
        let profile = p(45, 10);
        for x in [0.5f64, 1.0, 1.5, 2.0, 3.75, 7.25] {
            let xf = LogFloat::from_f64(x, profile).value;
            let c = eval_nonlinearity(Nonlinearity::Log, &xf, 32).unwrap();
            assert!((c.value.to_f64() - x.ln()).abs() < 2f64.powi(-30), "log {x}");
        }
    }

    #[test]
    fn nonlinearity_domain_checks() {
        let profile = p(20, 10);
        let big = LogFloat::from_f64(17.0, profile).value;
        assert!(eval_nonlinearity(Nonlinearity::Exp, &big, 20).is_err());
        let neg = LogFloat::from_f64(-1.0, profile).value;
        assert!(eval_nonlinearity(Nonlinearity::Log, &neg, 20).is_err());
        let zero = LogFloat::zero(profile);
        assert!(eval_nonlinearity(Nonlinearity::Log, &zero, 20).is_err());
    }

    #[test]
    fn softplus_shift_identity() {
        // softplus(x) - softplus(-x) = x, within twice the truncation
        // tolerance.
        let profile = p(50, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let bits = 34;
        for _ in 0..100 {
            let x = rng.gen_range(-7.5..7.5);
            let xf = LogFloat::from_f64(x, profile).value;
            let neg = LogFloat::from_f64(-x, profile).value;
            let a = eval_nonlinearity(Nonlinearity::Softplus, &xf, bits).unwrap();
            let b = eval_nonlinearity(Nonlinearity::Softplus, &neg, bits).unwrap();
            let diff = a.value.to_f64() - b.value.to_f64();
            assert!((diff - x).abs() < 2.0 * 2f64.powi(-30), "x={x} diff={diff}");
        }
    }

    #[test]
    fn profile_validation() {
        assert!(Profile::new(1, 8).is_err());
        assert!(Profile::new(64, 8).is_err());
        assert!(Profile::new(12, 33).is_err());
        assert!(Profile::new(12, 8).is_ok());
    }

    #[test]
    fn mixed_profiles_rejected() {
        let a = LogFloat::one(Profile::DEFAULT);
        let b = LogFloat::one(p(10, 8));
        assert_eq!(iterated_sum(&[a, b]).unwrap_err(), LogFloatError::ProfileMismatch);
    }
}
