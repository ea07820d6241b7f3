//! Log-domain arithmetic for the contraction-rate ladder. The ladder's
//! intermediate constants routinely carry exponents of magnitude 10⁹–10¹²
//! (e.g. φ_min = exp(−θM²/(η²σ²))), far outside f64 range, so every
//! potentially-extreme quantity is held as its natural logarithm.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use std::cmp::Ordering;
use std::ops::{Div, Mul};

/// ln(1 − eˣ) for x < 0, stable near both ends.
pub fn ln_1m_exp(x: f64) -> f64 {
    debug_assert!(x < 0.0);
    if x < -std::f64::consts::LN_2 {
        (-x.exp()).ln_1p()
    } else {
        (-x.exp_m1()).ln()
    }
}

/// A nonnegative scalar stored as its logarithm (−∞ encodes exact zero).
/// Invariant: `ln` is never NaN and never +∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPos {
    ln: f64,
}

impl LogPos {
    pub fn zero() -> Self {
        LogPos {
            ln: f64::NEG_INFINITY,
        }
    }

    pub fn one() -> Self {
        LogPos { ln: 0.0 }
    }

    pub fn from_value(v: f64) -> Self {
        assert!(v >= 0.0 && !v.is_nan() && v != f64::INFINITY, "bad LogPos value {v}");
        Self::from_ln(v.ln())
    }

    pub fn from_ln(ln: f64) -> Self {
        assert!(!ln.is_nan() && ln != f64::INFINITY, "bad LogPos exponent {ln}");
        // Normalize −0.0 so PartialEq and total_cmp agree.
        LogPos { ln: ln + 0.0 }
    }

    /// May round to 0 or saturate to +∞ outside f64 range; `ln_value` is exact.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }

    pub fn ln_value(&self) -> f64 {
        self.ln
    }

    pub fn is_zero(&self) -> bool {
        self.ln == f64::NEG_INFINITY
    }

    pub fn add(self, other: Self) -> Self {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (hi, lo) = if self.ln >= other.ln {
            (self.ln, other.ln)
        } else {
            (other.ln, self.ln)
        };
        LogPos {
            ln: hi + (lo - hi).exp().ln_1p(),
        }
    }

    /// self − other when positive; `None` when other ≥ self.
    pub fn sub(self, other: Self) -> Option<Self> {
        if other.is_zero() {
            return Some(self);
        }
        if other.ln >= self.ln {
            return None;
        }
        Some(LogPos {
            ln: self.ln + ln_1m_exp(other.ln - self.ln),
        })
    }

    /// 1 + self, stable for exponents of either sign.
    pub fn one_plus(self) -> Self {
        LogPos::one().add(self)
    }

    pub fn recip(self) -> Self {
        assert!(!self.is_zero(), "reciprocal of log-domain zero");
        LogPos { ln: -self.ln }
    }

    pub fn powi(self, n: i32) -> Self {
        if self.is_zero() {
            assert!(n > 0, "0^{n} undefined in log domain");
            return self;
        }
        LogPos {
            ln: self.ln * n as f64,
        }
    }

    pub fn sqrt(self) -> Self {
        LogPos { ln: 0.5 * self.ln }
    }

    /// Multiply by a plain positive scalar.
    pub fn scale(self, k: f64) -> Self {
        assert!(k > 0.0 && k.is_finite(), "bad scale {k}");
        if self.is_zero() {
            return self;
        }
        LogPos {
            ln: self.ln + k.ln(),
        }
    }
}

impl Mul for LogPos {
    type Output = LogPos;
    fn mul(self, rhs: LogPos) -> LogPos {
        if self.is_zero() || rhs.is_zero() {
            return LogPos::zero();
        }
        LogPos {
            ln: self.ln + rhs.ln,
        }
    }
}

impl Div for LogPos {
    type Output = LogPos;
    fn div(self, rhs: LogPos) -> LogPos {
        assert!(!rhs.is_zero(), "log-domain division by zero");
        if self.is_zero() {
            return self;
        }
        LogPos {
            ln: self.ln - rhs.ln,
        }
    }
}

impl Eq for LogPos {}

impl PartialOrd for LogPos {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LogPos {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ln.total_cmp(&other.ln)
    }
}

impl Serialize for LogPos {
    /// `{value, ln}`: `value` may round to 0 (or null once beyond f64 range);
    /// `ln` is authoritative.
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("LogPos", 2)?;
        s.serialize_field("value", &self.value())?;
        s.serialize_field("ln", &self.ln)?;
        s.end()
    }
}

/// A signed scalar with log-domain magnitude, for quantities like the rate c
/// that may legitimately cross zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    /// −1, 0, or 1.
    pub sign: i8,
    /// ln|x|; −∞ when sign = 0.
    pub ln_abs: f64,
}

impl SignedLog {
    pub fn positive(mag: LogPos) -> Self {
        if mag.is_zero() {
            return SignedLog {
                sign: 0,
                ln_abs: f64::NEG_INFINITY,
            };
        }
        SignedLog {
            sign: 1,
            ln_abs: mag.ln_value(),
        }
    }

    /// a − b as a signed quantity.
    pub fn diff(a: LogPos, b: LogPos) -> Self {
        match a.cmp(&b) {
            Ordering::Equal => SignedLog {
                sign: 0,
                ln_abs: f64::NEG_INFINITY,
            },
            Ordering::Greater => SignedLog {
                sign: 1,
                ln_abs: a.sub(b).unwrap().ln_value(),
            },
            Ordering::Less => SignedLog {
                sign: -1,
                ln_abs: b.sub(a).unwrap().ln_value(),
            },
        }
    }

    pub fn value(&self) -> f64 {
        self.sign as f64 * self.ln_abs.exp()
    }

    pub fn is_positive(&self) -> bool {
        self.sign > 0
    }

    /// Minimum of self and a nonnegative quantity.
    pub fn min_with(self, other: LogPos) -> Self {
        if self.sign < 0 {
            return self;
        }
        let as_pos = LogPos::from_ln(if self.sign == 0 {
            f64::NEG_INFINITY
        } else {
            self.ln_abs
        });
        if as_pos <= other {
            self
        } else {
            SignedLog::positive(other)
        }
    }
}

impl Serialize for SignedLog {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("SignedLog", 3)?;
        s.serialize_field("value", &self.value())?;
        s.serialize_field("ln_abs", &self.ln_abs)?;
        s.serialize_field("sign", &self.sign)?;
        s.end()
    }
}
