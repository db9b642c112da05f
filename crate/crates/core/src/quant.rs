//! Precision reduction of `[0, 1]` weights to `b`-bit unsigned integers.
//!
//! With `max = 2^b - 1`, a weight `x` becomes `q = ceil(x * max)` and comes
//! back as `q / max`. The round trip never decreases a value and overshoots
//! by strictly less than `1 / max`.

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::matrix::{DenseMatrix, SparseMatrix};

const MAGIC: &[u8; 4] = b"QVSM";
const VERSION: u8 = 1;
/// magic + version + b + n_rows + n_cols + entry_count
pub const PACKED_HEADER_LEN: usize = 4 + 1 + 1 + 8 + 8 + 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("bit width must be in 1..=64, got {0}")]
    InvalidBitwidth(u32),
    #[error("weight at row {row}, column {col} is outside [0, 1]")]
    OutOfRange { row: usize, col: u32 },
    #[error("input contains a non-finite value at position {0}")]
    NonFiniteInput(usize),
    #[error(transparent)]
    CorruptStream(#[from] DecodeError),
}

/// Bit width in `1..=64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bitwidth(u32);

impl Bitwidth {
    pub fn new(bits: u32) -> Result<Self, QuantError> {
        if (1..=64).contains(&bits) {
            Ok(Self(bits))
        } else {
            Err(QuantError::InvalidBitwidth(bits))
        }
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// `2^b - 1`
    pub fn max_value(self) -> u64 {
        u64::MAX >> (64 - self.0)
    }
}

/// Maps one `[0, 1]` weight to its `b`-bit code.
pub fn quantize_value(x: f64, b: Bitwidth) -> u64 {
    // above 53 bits 2^b - 1 rounds up to 2^b in f64, so clamp to the top code
    ((x * b.max_value() as f64).ceil() as u64).min(b.max_value())
}

pub fn dequantize_value(q: u64, b: Bitwidth) -> f64 {
    q as f64 / b.max_value() as f64
}

/// Fixed-width integers packed LSB-first into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedInts {
    bits: u32,
    len: usize,
    words: Vec<u64>,
}

impl PackedInts {
    pub fn new(bits: Bitwidth) -> Self {
        Self {
            bits: bits.get(),
            len: 0,
            words: Vec::new(),
        }
    }

    pub fn with_capacity(bits: Bitwidth, n: usize) -> Self {
        let mut p = Self::new(bits);
        p.words.reserve((n * bits.get() as usize).div_ceil(64));
        p
    }

    pub fn push(&mut self, v: u64) {
        let b = self.bits as usize;
        debug_assert!(b == 64 || v >> b == 0);
        let bit = self.len * b;
        let (word, off) = (bit / 64, bit % 64);
        if word == self.words.len() {
            self.words.push(0);
        }
        self.words[word] |= v << off;
        if off + b > 64 {
            self.words.push(v >> (64 - off));
        }
        self.len += 1;
    }

    pub fn get(&self, i: usize) -> u64 {
        assert!(i < self.len);
        let b = self.bits as usize;
        let bit = i * b;
        let (word, off) = (bit / 64, bit % 64);
        let mask = u64::MAX >> (64 - b);
        let mut v = self.words[word] >> off;
        if off + b > 64 {
            v |= self.words[word + 1] << (64 - off);
        }
        v & mask
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    /// Backing storage in bytes (64-bit word granularity).
    pub fn storage_bytes(&self) -> usize {
        self.words.len() * 8
    }

    /// The packed stream truncated to `ceil(len * b / 8)` bytes.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let n = (self.len * self.bits as usize).div_ceil(8);
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(n);
        out
    }

    pub fn from_le_bytes(bits: Bitwidth, len: usize, bytes: &[u8]) -> Result<Self, DecodeError> {
        let total_bits = len
            .checked_mul(bits.get() as usize)
            .ok_or_else(|| DecodeError::Invalid("payload length overflows".into()))?;
        if bytes.len() != total_bits.div_ceil(8) {
            return Err(DecodeError::Invalid("payload length mismatch".into()));
        }
        let words = bytes
            .chunks(8)
            .map(|c| {
                let mut w = [0u8; 8];
                w[..c.len()].copy_from_slice(c);
                u64::from_le_bytes(w)
            })
            .collect::<Vec<_>>();
        if total_bits % 8 != 0 && bytes[bytes.len() - 1] >> (total_bits % 8) != 0 {
            return Err(DecodeError::Invalid("nonzero padding bits".into()));
        }
        Ok(Self {
            bits: bits.get(),
            len,
            words,
        })
    }
}

/// Sparse matrix whose stored weights are `b`-bit codes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedMatrix {
    bits: Bitwidth,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    codes: PackedInts,
}

impl QuantizedMatrix {
    pub fn bits(&self) -> Bitwidth {
        self.bits
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn entry_count(&self) -> usize {
        self.indices.len()
    }

    pub fn codes(&self) -> &PackedInts {
        &self.codes
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (u32, u64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(|k| (self.indices[k], self.codes.get(k)))
    }

    /// Builds from rows of `(column, code)` pairs.
    pub fn from_rows(
        bits: Bitwidth,
        n_cols: usize,
        rows: &[Vec<(u32, u64)>],
    ) -> Result<Self, DecodeError> {
        let n: usize = rows.iter().map(Vec::len).sum();
        let mut codes = PackedInts::with_capacity(bits, n);
        let mut indices = Vec::with_capacity(n);
        let mut indptr = vec![0];
        for r in rows {
            for &(c, q) in r {
                if q > bits.max_value() {
                    return Err(DecodeError::Invalid(format!("code {q} exceeds bit width")));
                }
                indices.push(c);
                codes.push(q);
            }
            indptr.push(indices.len());
        }
        let m = Self {
            bits,
            n_cols,
            indptr,
            indices,
            codes,
        };
        m.check_columns()?;
        Ok(m)
    }

    fn check_columns(&self) -> Result<(), DecodeError> {
        for r in 0..self.n_rows() {
            let cols = &self.indices[self.indptr[r]..self.indptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1])
                || cols.last().is_some_and(|&c| c as usize >= self.n_cols)
            {
                return Err(DecodeError::Invalid(format!("row {r}: bad column order")));
            }
        }
        Ok(())
    }

    /// Header, per-row entry counts (u32), column stream (u32), then the
    /// packed code stream padded to a byte boundary.
    pub fn pack(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u8(self.bits.get() as u8);
        w.u64(self.n_rows() as u64);
        w.u64(self.n_cols as u64);
        w.u64(self.entry_count() as u64);
        for row in self.indptr.windows(2) {
            w.u32((row[1] - row[0]) as u32);
        }
        for &c in &self.indices {
            w.u32(c);
        }
        w.bytes(&self.codes.to_le_bytes());
        w.finish()
    }

    pub fn unpack(bytes: &[u8]) -> Result<Self, QuantError> {
        let mut r = Reader::open(bytes, MAGIC, VERSION)?;
        let bits = Bitwidth::new(r.u8("bit width")? as u32)
            .map_err(|_| DecodeError::Invalid("bit width".into()))?;
        let n_rows = r.u64("n_rows")?;
        let n_cols = r.u64("n_cols")?;
        let entries = r.u64("entry_count")?;
        let n_cols = usize::try_from(n_cols)
            .ok()
            .filter(|&c| c <= u32::MAX as usize + 1)
            .ok_or_else(|| DecodeError::Invalid("n_cols too large".into()))?;
        let n_rows = r.check_len(n_rows, "row lengths", 4)?;
        let lens = r.u32_vec(n_rows, "row lengths")?;
        let entries = r.check_len(entries, "columns", 4)?;
        let indices = r.u32_vec(entries, "columns")?;
        let payload_len = entries
            .checked_mul(bits.get() as usize)
            .map(|b| b.div_ceil(8))
            .ok_or_else(|| DecodeError::Invalid("payload length overflows".into()))?;
        let payload = r.take(payload_len, "code payload")?;
        r.finish()?;
        let mut indptr = Vec::with_capacity(n_rows + 1);
        indptr.push(0usize);
        for l in lens {
            let next = indptr.last().unwrap() + l as usize;
            indptr.push(next);
        }
        if *indptr.last().unwrap() != entries {
            return Err(DecodeError::Invalid("row lengths do not sum to entry count".into()).into());
        }
        let codes = PackedInts::from_le_bytes(bits, entries, payload)?;
        let m = Self {
            bits,
            n_cols,
            indptr,
            indices,
            codes,
        };
        m.check_columns()?;
        Ok(m)
    }
}

/// `q = ceil(w * (2^b - 1))` for every stored weight.
pub fn quantize(m: &SparseMatrix, bits: u32) -> Result<QuantizedMatrix, QuantError> {
    let b = Bitwidth::new(bits)?;
    let mut codes = PackedInts::with_capacity(b, m.nnz());
    for r in 0..m.n_rows() {
        let (cols, vals) = m.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            if !(0.0..=1.0).contains(&v) {
                return Err(QuantError::OutOfRange { row: r, col: c });
            }
            codes.push(quantize_value(v, b));
        }
    }
    Ok(QuantizedMatrix {
        bits: b,
        n_cols: m.n_cols(),
        indptr: m.indptr().to_vec(),
        indices: m.indices().to_vec(),
        codes,
    })
}

/// `w = q / (2^b - 1)`; zero codes are dropped from the sparse result.
pub fn dequantize(qm: &QuantizedMatrix) -> SparseMatrix {
    let mut out = SparseMatrix::empty(qm.n_cols);
    for r in 0..qm.n_rows() {
        out.push_row(qm.row(r).map(|(c, q)| (c, dequantize_value(q, qm.bits))));
    }
    out
}

/// Affine map used to bring arbitrary real values into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineRange {
    pub min: f64,
    pub max: f64,
}

impl AffineRange {
    pub fn fit(values: &[f64]) -> Result<Self, QuantError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(QuantError::NonFiniteInput(i));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() {
            return Ok(Self { min: 0.0, max: 0.0 });
        }
        Ok(Self { min, max })
    }

    pub fn is_degenerate(&self) -> bool {
        self.max <= self.min
    }

    /// Into `[0, 1]`, clamping values outside the fitted range.
    pub fn to_unit(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            ((x - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        }
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        if self.is_degenerate() {
            self.min
        } else {
            self.min + u * (self.max - self.min)
        }
    }
}

/// Dense codes plus the affine range needed to invert them.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQuantized {
    pub bits: Bitwidth,
    pub range: AffineRange,
    pub codes: Vec<u64>,
}

impl DenseQuantized {
    pub fn dequantize(&self) -> Vec<f64> {
        self.codes
            .iter()
            .map(|&q| self.range.from_unit(dequantize_value(q, self.bits)))
            .collect()
    }
}

/// Min-max rescales `values` to `[0, 1]` over the whole array, then quantizes.
/// A constant array maps to all-zero codes and inverts to the constant.
pub fn quantize_dense(values: &[f64], bits: u32) -> Result<DenseQuantized, QuantError> {
    let range = AffineRange::fit(values)?;
    quantize_dense_with(values, bits, range)
}

/// Quantizes with a range fitted elsewhere (e.g. on training data); values
/// outside the range are clamped.
pub fn quantize_dense_with(
    values: &[f64],
    bits: u32,
    range: AffineRange,
) -> Result<DenseQuantized, QuantError> {
    let b = Bitwidth::new(bits)?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(QuantError::NonFiniteInput(i));
    }
    let codes = values
        .iter()
        .map(|&v| quantize_value(range.to_unit(v), b))
        .collect();
    Ok(DenseQuantized {
        bits: b,
        range,
        codes,
    })
}

/// Quantize-then-dequantize a dense matrix with a shared affine range.
pub fn reduce_dense(
    m: &DenseMatrix,
    bits: u32,
    range: AffineRange,
) -> Result<DenseMatrix, QuantError> {
    let q = quantize_dense_with(m.as_slice(), bits, range)?;
    Ok(DenseMatrix::from_vec(m.n_rows(), m.n_cols(), q.dequantize()).expect("same shape"))
}

/// Quantize-then-dequantize a sparse `[0, 1]` matrix.
pub fn reduce_sparse(m: &SparseMatrix, bits: u32) -> Result<SparseMatrix, QuantError> {
    Ok(dequantize(&quantize(m, bits)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(bits: u32) -> Bitwidth {
        Bitwidth::new(bits).unwrap()
    }

    #[test]
    fn bitwidth_bounds() {
        assert!(Bitwidth::new(0).is_err());
        assert!(Bitwidth::new(65).is_err());
        assert_eq!(b(1).max_value(), 1);
        assert_eq!(b(8).max_value(), 255);
        assert_eq!(b(64).max_value(), u64::MAX);
    }

    #[test]
    fn point_values() {
        assert_eq!(quantize_value(0.0001, b(1)), 1);
        assert_eq!(quantize_value(1.0, b(1)), 1);
        // 0.3 * 15 = 4.5 exactly representable as ceil target
        assert_eq!(quantize_value(0.3, b(4)), 5);
        assert_eq!(quantize_value(1.0, b(8)), 255);
        assert_eq!(quantize_value(1.0, b(64)), u64::MAX);
        assert_eq!(dequantize_value(5, b(4)), 5.0 / 15.0);
        assert_eq!(dequantize_value(1, b(1)), 1.0);
        for bits in 1..=64 {
            assert_eq!(quantize_value(0.0, b(bits)), 0);
            assert_eq!(dequantize_value(0, b(bits)), 0.0);
            assert_eq!(quantize_value(1.0, b(bits)), b(bits).max_value());
        }
    }

    #[test]
    fn out_of_range_and_bad_width() {
        let m = SparseMatrix::from_rows(3, &[vec![(1, 0.5)], vec![(2, 1.5)]]);
        assert_eq!(quantize(&m, 4).unwrap_err(), QuantError::OutOfRange { row: 1, col: 2 });
        assert_eq!(quantize(&m, 0).unwrap_err(), QuantError::InvalidBitwidth(0));
    }

    #[test]
    fn nonzero_weights_keep_nonzero_codes() {
        let m = SparseMatrix::from_rows(4, &[vec![(0, 1e-12), (3, 0.7)], vec![(1, 1.0)]]);
        let q = quantize(&m, 1).unwrap();
        assert!(q.codes().iter().all(|c| c == 1));
        let back = dequantize(&q);
        assert_eq!(back.indices(), m.indices());
        assert!(back.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn packed_ints_cross_word_boundaries() {
        for bits in [1, 3, 7, 13, 31, 33, 63, 64] {
            let w = b(bits);
            let mut p = PackedInts::new(w);
            let vals: Vec<u64> = (0..200u64)
                .map(|i| i.wrapping_mul(0x9E37_79B9_7F4A_7C15) & w.max_value())
                .collect();
            for &v in &vals {
                p.push(v);
            }
            assert_eq!(p.iter().collect::<Vec<_>>(), vals);
            let bytes = p.to_le_bytes();
            assert_eq!(bytes.len(), (200 * bits as usize).div_ceil(8));
            assert_eq!(PackedInts::from_le_bytes(w, 200, &bytes).unwrap(), p);
        }
    }

    #[test]
    fn pack_sizes() {
        let rows: Vec<Vec<(u32, u64)>> = (0..10)
            .map(|r| (0..10).map(|c| (c, (r * 10 + c) as u64 % 16)).collect())
            .collect();
        let q = QuantizedMatrix::from_rows(b(4), 10, &rows).unwrap();
        let bytes = q.pack();
        // 100 entries * 4 bits = 50 payload bytes
        assert_eq!(bytes.len(), PACKED_HEADER_LEN + 10 * 4 + 100 * 4 + 50);
        assert_eq!(QuantizedMatrix::unpack(&bytes).unwrap(), q);
    }

    #[test]
    fn pack_empty() {
        let q = quantize(&SparseMatrix::empty(0), 3).unwrap();
        let bytes = q.pack();
        assert_eq!(bytes.len(), PACKED_HEADER_LEN);
        assert_eq!(QuantizedMatrix::unpack(&bytes).unwrap(), q);
    }

    #[test]
    fn unpack_rejects_corruption() {
        let m = SparseMatrix::from_rows(4, &[vec![(0, 0.2), (3, 0.7)], vec![(1, 1.0)]]);
        let bytes = quantize(&m, 5).unwrap().pack();
        for cut in [0, 3, 10, PACKED_HEADER_LEN, bytes.len() - 1] {
            assert!(QuantizedMatrix::unpack(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(
            QuantizedMatrix::unpack(&bad),
            Err(QuantError::CorruptStream(DecodeError::BadMagic { .. }))
        ));
        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(QuantizedMatrix::unpack(&trailing).is_err());
    }

    #[test]
    fn memory_ratio() {
        for bits in 1..=64u32 {
            let mut p = PackedInts::new(b(bits));
            for _ in 0..640 {
                p.push(0);
            }
            assert_eq!(p.storage_bytes() * 64, 640 * 8 * bits as usize);
        }
    }

    #[test]
    fn dense_examples() {
        let q = quantize_dense(&[-1.0, 0.0, 1.0], 1).unwrap();
        assert_eq!(q.codes, vec![0, 1, 1]);
        let c = quantize_dense(&[3.0, 3.0, 3.0], 4).unwrap();
        assert_eq!(c.codes, vec![0, 0, 0]);
        assert_eq!(c.dequantize(), vec![3.0, 3.0, 3.0]);
        let vals = [0.0, 0.1, 0.55, 1.0];
        let d = quantize_dense(&vals, 6).unwrap();
        let direct: Vec<u64> = vals.iter().map(|&v| quantize_value(v, b(6))).collect();
        assert_eq!(d.codes, direct);
        assert_eq!(
            quantize_dense(&[0.0, f64::NAN], 4).unwrap_err(),
            QuantError::NonFiniteInput(1)
        );
    }

    proptest! {
        #[test]
        fn one_sided_error(x in 0.0f64..=1.0, bits in 1u32..=32) {
            let w = b(bits);
            let err = dequantize_value(quantize_value(x, w), w) - x;
            prop_assert!(err >= 0.0);
            prop_assert!(err < 1.0 / w.max_value() as f64);
        }

        #[test]
        fn monotone_and_idempotent(x in 0.0f64..=1.0, y in 0.0f64..=1.0, bits in 1u32..=64) {
            let w = b(bits);
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(quantize_value(lo, w) <= quantize_value(hi, w));
            let q = quantize_value(x, w);
            prop_assert_eq!(quantize_value(dequantize_value(q, w), w), q);
        }

        #[test]
        fn pack_round_trip(
            rows in proptest::collection::vec(proptest::collection::btree_map(0u32..50, any::<u64>(), 0..8), 0..10),
            bits in 1u32..=64,
        ) {
            let w = b(bits);
            let rows: Vec<Vec<(u32, u64)>> = rows.into_iter()
                .map(|r| r.into_iter().map(|(c, q)| (c, q & w.max_value())).collect())
                .collect();
            let q = QuantizedMatrix::from_rows(w, 50, &rows).unwrap();
            let n = q.entry_count();
            let bytes = q.pack();
            prop_assert_eq!(bytes.len(), PACKED_HEADER_LEN + rows.len() * 4 + n * 4 + (n * bits as usize).div_ceil(8));
            prop_assert_eq!(QuantizedMatrix::unpack(&bytes).unwrap(), q);
        }
    }
}
