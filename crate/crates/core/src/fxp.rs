//! Bit-accurate signed fixed-point emulation.
//!
//! A format `Q(W, F)` holds integers `k` with `-2^(W-1) <= k <= 2^(W-1) - 1`
//! and represents the real value `k * 2^-F`. Every arithmetic operation works
//! on the integer mantissas directly, so results are reproducible bit for bit
//! regardless of host floating-point behaviour.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_WORD_WIDTH: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rounding {
    /// Round to nearest, ties away from zero.
    #[default]
    Nearest,
    /// Round toward negative infinity (drop the low bits).
    Truncate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Overflow {
    #[default]
    Saturate,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxpFormat {
    word_width: u32,
    frac_width: u32,
    rounding: Rounding,
    overflow: Overflow,
}

/// Exact power of two as an `f64` for exponents in the normal range.
pub(crate) fn pow2(exp: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&exp));
    f64::from_bits(((1023 + exp) as u64) << 52)
}

impl FxpFormat {
    /// Format with the default policies: nearest rounding, saturating overflow.
    pub fn new(word_width: u32, frac_width: u32) -> Result<Self> {
        if !(2..=MAX_WORD_WIDTH).contains(&word_width) {
            return Err(Error::InvalidFormat(format!(
                "word width {word_width} outside 2..={MAX_WORD_WIDTH}"
            )));
        }
        if frac_width >= word_width {
            return Err(Error::InvalidFormat(format!(
                "fraction width {frac_width} must be below word width {word_width}"
            )));
        }
        Ok(Self {
            word_width,
            frac_width,
            rounding: Rounding::default(),
            overflow: Overflow::default(),
        })
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn with_overflow(mut self, overflow: Overflow) -> Self {
        self.overflow = overflow;
        self
    }

    pub fn word_width(&self) -> u32 {
        self.word_width
    }

    pub fn frac_width(&self) -> u32 {
        self.frac_width
    }

    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    pub fn overflow(&self) -> Overflow {
        self.overflow
    }

    pub fn max_raw(&self) -> i64 {
        ((1i128 << (self.word_width - 1)) - 1) as i64
    }

    pub fn min_raw(&self) -> i64 {
        (-(1i128 << (self.word_width - 1))) as i64
    }

    /// Weight of the least significant bit, `2^-F`.
    pub fn ulp(&self) -> f64 {
        pow2(-(self.frac_width as i32))
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.ulp()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.ulp()
    }

    pub(crate) fn raw_to_f64(&self, raw: i64) -> f64 {
        raw as f64 * self.ulp()
    }

    /// Applies the overflow policy to an exact integer mantissa.
    pub(crate) fn fit(&self, raw: i128) -> Result<i64> {
        let (lo, hi) = (self.min_raw() as i128, self.max_raw() as i128);
        if raw > hi || raw < lo {
            return match self.overflow {
                Overflow::Saturate => Ok(if raw > hi { hi as i64 } else { lo as i64 }),
                Overflow::Error => Err(self.overflow_error(raw as f64 * self.ulp())),
            };
        }
        Ok(raw as i64)
    }

    /// Divides an exact product of two mantissas by `2^F` under the rounding policy.
    pub(crate) fn rescale_product(&self, product: i128) -> i128 {
        let f = self.frac_width;
        if f == 0 {
            return product;
        }
        match self.rounding {
            Rounding::Truncate => product >> f,
            Rounding::Nearest => {
                let half = 1i128 << (f - 1);
                if product >= 0 {
                    (product + half) >> f
                } else {
                    -((-product + half) >> f)
                }
            }
        }
    }

    fn overflow_error(&self, value: f64) -> Error {
        Error::Overflow {
            value,
            word_width: self.word_width,
            frac_width: self.frac_width,
        }
    }
}

impl fmt::Display for FxpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.word_width, self.frac_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxpValue {
    raw: i64,
    format: FxpFormat,
}

impl FxpValue {
    pub fn from_raw(raw: i64, format: FxpFormat) -> Result<Self> {
        if raw < format.min_raw() || raw > format.max_raw() {
            return Err(format.overflow_error(raw as f64 * format.ulp()));
        }
        Ok(Self { raw, format })
    }

    pub fn zero(format: FxpFormat) -> Self {
        Self { raw: 0, format }
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> FxpFormat {
        self.format
    }

    /// Nearest `f64` to the represented value; exact whenever `|raw| < 2^53`.
    pub fn to_f64(&self) -> f64 {
        self.format.raw_to_f64(self.raw)
    }
}

impl fmt::Display for FxpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Rounds a real scalar onto the format's grid.
pub fn quantize(x: f64, fmt: FxpFormat) -> Result<FxpValue> {
    Ok(FxpValue {
        raw: quantize_raw(x, fmt)?,
        format: fmt,
    })
}

pub(crate) fn quantize_raw(x: f64, fmt: FxpFormat) -> Result<i64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("cannot quantize {x}")));
    }
    // Scaling by a power of two is exact unless it overflows to infinity.
    let scaled = x * pow2(fmt.frac_width as i32);
    let rounded = match fmt.rounding {
        Rounding::Nearest => scaled.round(),
        Rounding::Truncate => scaled.floor(),
    };
    let bound = pow2(fmt.word_width as i32 - 1);
    if rounded >= bound || rounded < -bound {
        return match fmt.overflow {
            Overflow::Saturate => Ok(if rounded > 0.0 {
                fmt.max_raw()
            } else {
                fmt.min_raw()
            }),
            Overflow::Error => Err(fmt.overflow_error(x)),
        };
    }
    Ok(rounded as i64)
}

fn shared_format(a: &FxpValue, b: &FxpValue) -> Result<FxpFormat> {
    if a.format != b.format {
        return Err(Error::FormatMismatch);
    }
    Ok(a.format)
}

pub fn q_add(a: FxpValue, b: FxpValue) -> Result<FxpValue> {
    let fmt = shared_format(&a, &b)?;
    let raw = fmt.fit(a.raw as i128 + b.raw as i128)?;
    Ok(FxpValue { raw, format: fmt })
}

pub fn q_sub(a: FxpValue, b: FxpValue) -> Result<FxpValue> {
    let fmt = shared_format(&a, &b)?;
    let raw = fmt.fit(a.raw as i128 - b.raw as i128)?;
    Ok(FxpValue { raw, format: fmt })
}

pub fn q_mul(a: FxpValue, b: FxpValue) -> Result<FxpValue> {
    let fmt = shared_format(&a, &b)?;
    let raw = fmt.fit(fmt.rescale_product(a.raw as i128 * b.raw as i128))?;
    Ok(FxpValue { raw, format: fmt })
}

/// Quantizes every element of a real slice.
pub fn quantize_slice(xs: &[f64], fmt: FxpFormat) -> Result<Vec<FxpValue>> {
    xs.iter().map(|&x| quantize(x, fmt)).collect()
}

/// Result of one fixed-point affine kernel evaluation `M v + b`.
#[derive(Debug, Clone)]
pub struct MacOutput {
    pub raw: Vec<i64>,
    /// Per-row datapath error against the exact value of `M v + b` on the
    /// already-quantized operands.
    pub error: Vec<f64>,
}

/// A real matrix whose entries have been quantized once, ready for repeated
/// multiply-accumulate evaluation.
#[derive(Debug, Clone)]
pub struct QuantizedMatrix {
    rows: usize,
    cols: usize,
    raw: Vec<i64>,
    format: FxpFormat,
}

impl QuantizedMatrix {
    pub fn from_real(m: &DMatrix<f64>, format: FxpFormat) -> Result<Self> {
        let mut raw = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                raw.push(quantize_raw(m[(i, j)], format)?);
            }
        }
        Ok(Self {
            rows: m.nrows(),
            cols: m.ncols(),
            raw,
            format,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn format(&self) -> FxpFormat {
        self.format
    }

    pub fn to_real(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(
            self.rows,
            self.cols,
            self.raw.iter().map(|&r| self.format.raw_to_f64(r)),
        )
    }

    pub fn matvec(&self, v: &[FxpValue]) -> Result<Vec<FxpValue>> {
        if v.iter().any(|x| x.format != self.format) {
            return Err(Error::FormatMismatch);
        }
        let raw: Vec<i64> = v.iter().map(|x| x.raw).collect();
        let out = self.affine_raw(&raw, None)?;
        Ok(out
            .raw
            .into_iter()
            .map(|r| FxpValue {
                raw: r,
                format: self.format,
            })
            .collect())
    }

    /// Evaluates `M v (+ bias)` row by row as a left-to-right MAC chain: every
    /// product is rounded back to the format and every partial sum passes
    /// through the overflow policy. The bias, when present, is added last.
    pub fn affine_raw(&self, v: &[i64], bias: Option<&[i64]>) -> Result<MacOutput> {
        crate::error::check_dim("matrix-vector product", self.cols, v.len())?;
        if let Some(b) = bias {
            crate::error::check_dim("matrix-vector bias", self.rows, b.len())?;
        }
        let fmt = self.format;
        let f = fmt.frac_width;
        let scale = pow2(-2 * f as i32);
        let mut out = Vec::with_capacity(self.rows);
        let mut error = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            let row = &self.raw[i * self.cols..(i + 1) * self.cols];
            let mut acc: i64 = 0;
            // Exact reference at scale 2^(2F); `None` once it leaves i128.
            let mut exact: Option<i128> = Some(0);
            let mut exact_f64 = 0.0f64;
            for (j, (&m, &x)) in row.iter().zip(v).enumerate() {
                let p = m as i128 * x as i128;
                let term = fmt.fit(fmt.rescale_product(p))?;
                acc = if j == 0 {
                    term
                } else {
                    fmt.fit(acc as i128 + term as i128)?
                };
                exact = exact.and_then(|e| e.checked_add(p));
                exact_f64 += p as f64;
            }
            if let Some(b) = bias {
                acc = fmt.fit(acc as i128 + b[i] as i128)?;
                let shifted = (b[i] as i128) << f;
                exact = exact.and_then(|e| e.checked_add(shifted));
                exact_f64 += shifted as f64;
            }
            let err = match exact {
                Some(e) => (((acc as i128) << f) - e) as f64 * scale,
                None => ((acc as i128) << f) as f64 * scale - exact_f64 * scale,
            };
            out.push(acc);
            error.push(err);
        }
        Ok(MacOutput { raw: out, error })
    }
}

/// Fixed-point matrix-vector product; `m` is quantized to `fmt` on entry.
pub fn q_matvec(m: &DMatrix<f64>, v: &[FxpValue], fmt: FxpFormat) -> Result<Vec<FxpValue>> {
    QuantizedMatrix::from_real(m, fmt)?.matvec(v)
}
