//! Vector element types.
//!
//! Every dataset stores one of three element kinds: unsigned bytes, signed
//! bytes or 32-bit floats. The rest of the crate is generic over [`Element`]
//! so the same graph, layout and search code serves all three.

use std::fmt::Debug;

use num_traits::{NumCast, ToPrimitive};

/// Runtime tag for an element type, as stored in file headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElemKind {
    U8,
    I8,
    F32,
}

impl ElemKind {
    /// Bytes per element.
    pub fn size(self) -> usize {
        match self {
            ElemKind::U8 | ElemKind::I8 => 1,
            ElemKind::F32 => 4,
        }
    }

    pub fn tag(self) -> u32 {
        match self {
            ElemKind::U8 => 0,
            ElemKind::I8 => 1,
            ElemKind::F32 => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(ElemKind::U8),
            1 => Some(ElemKind::I8),
            2 => Some(ElemKind::F32),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElemKind::U8 => "u8",
            ElemKind::I8 => "i8",
            ElemKind::F32 => "f32",
        }
    }

    /// Whether the values are 8-bit integers (these get centered before
    /// hyperplane projection).
    pub fn is_byte(self) -> bool {
        matches!(self, ElemKind::U8 | ElemKind::I8)
    }
}

impl std::fmt::Display for ElemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A scalar that can be stored as a vector component.
pub trait Element:
    Copy + Default + PartialEq + PartialOrd + Debug + Send + Sync + ToPrimitive + NumCast + 'static
{
    const KIND: ElemKind;

    /// Squared Euclidean distance. Integer kinds accumulate in `u32`, which
    /// cannot overflow for dimensions up to 65 000.
    fn squared_l2(a: &[Self], b: &[Self]) -> f32;

    fn as_f32(self) -> f32;

    /// Appends the little-endian encoding of `values` to `out`.
    fn write_le(values: &[Self], out: &mut Vec<u8>);

    /// Decodes `out.len()` values from `bytes`.
    fn read_le(bytes: &[u8], out: &mut [Self]);
}

impl Element for u8 {
    const KIND: ElemKind = ElemKind::U8;

    #[inline]
    fn squared_l2(a: &[u8], b: &[u8]) -> f32 {
        let mut acc = 0u32;
        for (&x, &y) in a.iter().zip(b) {
            let d = x.abs_diff(y) as u32;
            acc += d * d;
        }
        acc as f32
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self as f32
    }

    fn write_le(values: &[u8], out: &mut Vec<u8>) {
        out.extend_from_slice(values);
    }

    fn read_le(bytes: &[u8], out: &mut [u8]) {
        out.copy_from_slice(&bytes[..out.len()]);
    }
}

impl Element for i8 {
    const KIND: ElemKind = ElemKind::I8;

    #[inline]
    fn squared_l2(a: &[i8], b: &[i8]) -> f32 {
        let mut acc = 0u32;
        for (&x, &y) in a.iter().zip(b) {
            let d = x.abs_diff(y) as u32;
            acc += d * d;
        }
        acc as f32
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self as f32
    }

    fn write_le(values: &[i8], out: &mut Vec<u8>) {
        out.extend(values.iter().map(|&v| v as u8));
    }

    fn read_le(bytes: &[u8], out: &mut [i8]) {
        for (o, &b) in out.iter_mut().zip(bytes) {
            *o = b as i8;
        }
    }
}

impl Element for f32 {
    const KIND: ElemKind = ElemKind::F32;

    #[inline]
    fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
        // Eight independent lanes let the compiler vectorize the loop.
        let mut lanes = [0f32; 8];
        let chunks_a = a.chunks_exact(8);
        let chunks_b = b.chunks_exact(8);
        let (rest_a, rest_b) = (chunks_a.remainder(), chunks_b.remainder());
        for (ca, cb) in chunks_a.zip(chunks_b) {
            for i in 0..8 {
                let d = ca[i] - cb[i];
                lanes[i] += d * d;
            }
        }
        let mut acc: f32 = lanes.iter().sum();
        for (x, y) in rest_a.iter().zip(rest_b) {
            let d = x - y;
            acc += d * d;
        }
        acc
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self
    }

    fn write_le(values: &[f32], out: &mut Vec<u8>) {
        out.reserve(values.len() * 4);
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn read_le(bytes: &[u8], out: &mut [f32]) {
        for (o, chunk) in out.iter_mut().zip(bytes.chunks_exact(4)) {
            *o = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
    }
}
