//! Extended-precision scalars.
//!
//! Every quantity in the construction (stepsizes, certificate entries,
//! eigenvalues) is carried as an MPFR float whose mantissa width is fixed by a
//! [`Precision`]. Values built from the same precision are bit-identical across
//! runs and platforms.

use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Extended-precision real number.
pub type Real = Float;

/// Smallest mantissa width accepted anywhere in the crate.
pub const MIN_PRECISION_BITS: u32 = 64;

/// Mantissa width in bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Precision(u32);

impl Default for Precision {
    fn default() -> Self {
        Precision(128)
    }
}

impl Precision {
    pub fn new(bits: u32) -> Result<Self> {
        if bits < MIN_PRECISION_BITS {
            return Err(Error::Precision(bits));
        }
        Ok(Precision(bits))
    }

    /// 128 bits up to stage 8, 256 bits beyond. Pattern entries span
    /// (1+√2)^{±4k}, which exhausts doubles near k = 9.
    pub fn for_stage(k: u32) -> Self {
        if k <= 8 {
            Precision(128)
        } else {
            Precision(256)
        }
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn zero(self) -> Real {
        Float::new(self.0)
    }

    pub fn int(self, v: i64) -> Real {
        Float::with_val(self.0, v)
    }

    pub fn from_f64(self, v: f64) -> Real {
        Float::with_val(self.0, v)
    }

    pub fn ratio(self, num: i64, den: i64) -> Real {
        Float::with_val(self.0, num) / den
    }

    pub fn sqrt2(self) -> Real {
        Float::with_val(self.0, 2).sqrt()
    }

    /// The silver ratio 1 + √2.
    pub fn silver(self) -> Real {
        self.sqrt2() + 1u32
    }

    /// (1 + √2)^e for any integer exponent.
    pub fn silver_pow(self, e: i64) -> Real {
        let s = self.silver();
        Float::with_val(self.0, (&s).pow(e as i32))
    }

    /// Unit roundoff 2^{-bits}.
    pub fn epsilon(self) -> Real {
        Float::with_val(self.0, Float::i_exp(1, -(self.0 as i32)))
    }

    /// Default PSD tolerance 2^{-bits/2}.
    pub fn psd_tolerance(self) -> Real {
        Float::with_val(self.0, Float::i_exp(1, -((self.0 / 2) as i32)))
    }

    pub fn parse(self, text: &str) -> Result<Real> {
        let parsed = Float::parse(text.trim()).map_err(|_| Error::Parse(text.to_string()))?;
        let value = Float::with_val(self.0, parsed);
        if !value.is_finite() {
            return Err(Error::Parse(text.to_string()));
        }
        Ok(value)
    }
}

/// Decimal rendering with enough digits to round-trip at the value's precision.
pub fn to_decimal(x: &Real) -> String {
    x.to_string_radix(10, None)
}

/// |a - b| / max(|b|, floor).
pub fn rel_err(a: &Real, b: &Real, floor: f64) -> Real {
    let diff = Float::with_val(a.prec(), a - b).abs();
    let scale = Float::with_val(a.prec(), b.abs_ref()).max(&Float::with_val(a.prec(), floor));
    diff / scale
}

pub fn sum<'a, I: IntoIterator<Item = &'a Real>>(prec: Precision, items: I) -> Real {
    let mut acc = prec.zero();
    for x in items {
        acc += x;
    }
    acc
}

/// max_i |x_i|, zero for an empty slice.
pub fn max_abs(prec: Precision, items: &[Real]) -> Real {
    let mut best = prec.zero();
    for x in items {
        if x.cmp_abs(&best) == Some(std::cmp::Ordering::Greater) {
            best = Float::with_val(prec.bits(), x.abs_ref());
        }
    }
    best
}
