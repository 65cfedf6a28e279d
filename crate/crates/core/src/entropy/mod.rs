//! Uniform scalar quantization and Huffman coding driven by a parametric
//! Cauchy model. Only the model (location, scale, step, alphabet bounds) is
//! transmitted; both ends rebuild the identical codebook from it.

mod bits;
mod huffman;

pub use bits::{BitBuf, BitReader, BitWriter};
pub use huffman::HuffmanCode;

use crate::{Error, Result};

/// Fixed-point scale for transmitted model parameters.
pub const FIXED_ONE: f64 = (1u32 << 20) as f64;
/// Probability floor of the escape symbol.
pub const ESCAPE_FLOOR: f64 = 1.0 / 16384.0;
pub const ALPHABET_MIN: i64 = -32768;
pub const ALPHABET_MAX: i64 = 32767;
/// Symbol weights are probabilities scaled by this before code construction.
const WEIGHT_SCALE: f64 = (1u64 << 30) as f64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyModel {
    pub x0: f64,
    pub gamma: f64,
    pub qstep: f64,
    pub smin: i32,
    pub smax: i32,
}

impl CauchyModel {
    pub fn new(x0: f64, gamma: f64, qstep: f64, smin: i32, smax: i32) -> Result<CauchyModel> {
        let m = CauchyModel {
            x0,
            gamma,
            qstep,
            smin,
            smax,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("Cauchy scale must be positive, got {}", self.gamma)));
        }
        if !(self.qstep > 0.0 && self.qstep.is_finite()) || !self.x0.is_finite() {
            return Err(Error::Config(format!("quantization step must be positive, got {}", self.qstep)));
        }
        if self.smin > 0 || self.smax < 0 || (self.smin as i64) < ALPHABET_MIN || (self.smax as i64) > ALPHABET_MAX {
            return Err(Error::Config(format!("bad alphabet [{}, {}]", self.smin, self.smax)));
        }
        Ok(())
    }

    pub fn alphabet_size(&self) -> usize {
        (self.smax as i64 - self.smin as i64 + 1) as usize
    }

    pub fn quantize(&self, v: f64) -> i64 {
        quantize(v, self.qstep)
    }

    pub fn dequantize(&self, s: i64) -> f64 {
        s as f64 * self.qstep
    }

    /// The model with location, scale and step rounded to the transmitted
    /// fixed-point grid, so encoder and decoder build identical tables.
    pub fn canonical(&self) -> CauchyModel {
        let words = self.to_words();
        CauchyModel::from_words(words).expect("canonical model is valid")
    }

    /// `[x0, γ, qstep, bounds]` as little-endian-ready words; the first three
    /// are `value × 2²⁰` as `i32`, the last packs `smin` and `smax` as `i16`s.
    pub fn to_words(&self) -> [u32; 4] {
        let fx = |v: f64| (v * FIXED_ONE).round().clamp(i32::MIN as f64, i32::MAX as f64) as i32;
        let x0 = fx(self.x0);
        let gamma = fx(self.gamma).max(1);
        let qstep = fx(self.qstep).max(1);
        let bounds = ((self.smin as i16 as u16 as u32) << 16) | self.smax as i16 as u16 as u32;
        [x0 as u32, gamma as u32, qstep as u32, bounds]
    }

    pub fn from_words(w: [u32; 4]) -> Result<CauchyModel> {
        let f = |v: u32| v as i32 as f64 / FIXED_ONE;
        let smin = (w[3] >> 16) as u16 as i16 as i32;
        let smax = w[3] as u16 as i16 as i32;
        CauchyModel::new(f(w[0]), f(w[1]), f(w[2]), smin, smax)
            .map_err(|e| Error::CorruptBlock(format!("model header: {e}")))
    }

    pub fn to_bytes(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        for (k, w) in self.to_words().iter().enumerate() {
            out[4 * k..4 * k + 4].copy_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<CauchyModel> {
        if b.len() < 16 {
            return Err(Error::TruncatedStream("model header".into()));
        }
        let w = |k: usize| u32::from_le_bytes(b[4 * k..4 * k + 4].try_into().unwrap());
        CauchyModel::from_words([w(0), w(1), w(2), w(3)])
    }

    fn cdf(&self, x: f64) -> f64 {
        0.5 + det_atan((x - self.x0) / self.gamma) / std::f64::consts::PI
    }

    /// In-alphabet symbol probabilities followed by the escape probability.
    pub fn probabilities(&self) -> Vec<f64> {
        let q = self.qstep;
        let edges: Vec<f64> = (self.smin as i64..=self.smax as i64 + 1)
            .map(|s| self.cdf(q * (s as f64 - 0.5)))
            .collect();
        let mut p: Vec<f64> = edges.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
        let covered = edges[edges.len() - 1] - edges[0];
        p.push((1.0 - covered).max(ESCAPE_FLOOR));
        p
    }
}

/// `round(v / qstep)`, halves away from zero.
pub fn quantize(v: f64, qstep: f64) -> i64 {
    (v / qstep).round() as i64
}

/// Arctangent from IEEE basic operations and `sqrt` only, so the result is
/// identical on every platform.
pub fn det_atan(x: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    if x.is_nan() {
        return x;
    }
    if x.is_infinite() {
        return FRAC_PI_2.copysign(x);
    }
    if x.abs() > 1.0 {
        return FRAC_PI_2.copysign(x) - det_atan(1.0 / x);
    }
    // two half-angle reductions bring |y| below tan(π/16) ≈ 0.199
    let mut y = x;
    for _ in 0..2 {
        y /= 1.0 + (1.0 + y * y).sqrt();
    }
    let y2 = y * y;
    let mut term = y;
    let mut sum = 0.0;
    for k in 0..24 {
        sum += term / (2 * k + 1) as f64;
        term *= -y2;
    }
    4.0 * sum
}

/// Location = median, scale = half the interquartile range floored at
/// `qstep / 4`, alphabet = quantized extremes clipped to 16 bits and widened
/// to contain 0.
pub fn fit_model(values: &[f64], qstep: f64) -> Result<CauchyModel> {
    if values.is_empty() {
        return Err(Error::EmptyStream);
    }
    if !(qstep > 0.0 && qstep.is_finite()) {
        return Err(Error::Config(format!("quantization step must be positive, got {qstep}")));
    }
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let x0 = quantile(&v, 0.5);
    let iqr = quantile(&v, 0.75) - quantile(&v, 0.25);
    let gamma = (0.5 * iqr).max(0.25 * qstep);
    let clip = |s: i64| s.clamp(ALPHABET_MIN, ALPHABET_MAX) as i32;
    let smin = clip(quantize(v[0], qstep).min(0));
    let smax = clip(quantize(v[v.len() - 1], qstep).max(0));
    CauchyModel::new(x0, gamma, qstep, smin, smax)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Huffman codebook for a model's alphabet plus escape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    smin: i64,
    smax: i64,
    code: HuffmanCode,
}

/// Builds the codebook of a model. Weights are probabilities scaled to
/// integers (minimum 1) so construction is exact and deterministic.
pub fn build_table(model: &CauchyModel) -> Codebook {
    let weights: Vec<u64> = model
        .probabilities()
        .iter()
        .map(|p| ((p * WEIGHT_SCALE).round() as u64).max(1))
        .collect();
    Codebook {
        smin: model.smin as i64,
        smax: model.smax as i64,
        code: HuffmanCode::from_weights(&weights),
    }
}

impl Codebook {
    pub fn huffman(&self) -> &HuffmanCode {
        &self.code
    }

    pub fn escape_index(&self) -> usize {
        self.code.len() - 1
    }

    /// `(code, length)` of an in-alphabet symbol, or `None` when it needs
    /// the escape path.
    pub fn code_of(&self, s: i64) -> Option<(u64, u8)> {
        (self.smin..=self.smax)
            .contains(&s)
            .then(|| self.code.code((s - self.smin) as usize))
    }

    pub fn escape_code(&self) -> (u64, u8) {
        self.code.code(self.escape_index())
    }

    /// Bits needed for `s`.
    pub fn cost(&self, s: i64) -> u64 {
        match self.code_of(s) {
            Some((_, l)) => l as u64,
            None => self.escape_code().1 as u64 + 32,
        }
    }

    pub fn write_symbol(&self, s: i64, w: &mut BitWriter) {
        match self.code_of(s) {
            Some((c, l)) => w.write(c, l as u32),
            None => {
                let (c, l) = self.escape_code();
                w.write(c, l as u32);
                let raw = s.clamp(i32::MIN as i64, i32::MAX as i64) as i32;
                w.write(raw as u32 as u64, 32);
            }
        }
    }

    pub fn read_symbol(&self, r: &mut BitReader<'_>) -> Result<i64> {
        let idx = self.code.read(r)?;
        if idx == self.escape_index() {
            let s = r.read(32)? as u32 as i32 as i64;
            if (self.smin..=self.smax).contains(&s) {
                return Err(Error::BadEscape);
            }
            Ok(s)
        } else {
            Ok(self.smin + idx as i64)
        }
    }

    /// Code lengths of every entry, escape last; equal models give equal bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.code.lengths().to_vec()
    }
}

pub fn write_symbols(symbols: &[i64], book: &Codebook, w: &mut BitWriter) {
    for &s in symbols {
        book.write_symbol(s, w);
    }
}

pub fn read_symbols(r: &mut BitReader<'_>, book: &Codebook, count: usize) -> Result<Vec<i64>> {
    (0..count).map(|_| book.read_symbol(r)).collect()
}

pub fn encode_symbols(symbols: &[i64], model: &CauchyModel) -> BitBuf {
    let book = build_table(model);
    let mut w = BitWriter::new();
    write_symbols(symbols, &book, &mut w);
    w.finish()
}

pub fn decode_symbols(bits: &BitBuf, model: &CauchyModel, count: usize) -> Result<Vec<i64>> {
    let book = build_table(model);
    let mut r = BitReader::from_buf(bits)?;
    read_symbols(&mut r, &book, count)
}

/// Quantizes each value with the model's step and writes its code.
pub fn encode_stream(values: &[f64], model: &CauchyModel) -> BitBuf {
    let symbols: Vec<i64> = values.iter().map(|&v| model.quantize(v)).collect();
    encode_symbols(&symbols, model)
}

/// Reads `count` symbols and returns `s · qstep` for each.
pub fn decode_stream(bits: &BitBuf, model: &CauchyModel, count: usize) -> Result<Vec<f64>> {
    Ok(decode_symbols(bits, model, count)?
        .into_iter()
        .map(|s| model.dequantize(s))
        .collect())
}
