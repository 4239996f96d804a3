//! States of the fuzzing MDP: a seed input is the system, and the agent only
//! ever observes a fixed-width substring of it.

use std::fmt;
use std::ops::RangeInclusive;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MdpError {
    #[error("window [{offset}, {offset}+{width}) does not fit in an input of {len} bytes")]
    OutOfRange {
        offset: usize,
        width: usize,
        len: usize,
    },
    #[error("state width must be at least one byte")]
    ZeroWidth,
    #[error("inputs must contain at least one byte")]
    EmptyInput,
    #[error("seed of {len} bytes is shorter than the state width {width}")]
    SeedTooShort { len: usize, width: usize },
}

/// An immutable program input. Cloning is cheap; mutations always build a new
/// value.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Input(Arc<[u8]>);

impl Input {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Result<Self, MdpError> {
        let bytes = bytes.into();
        if bytes.is_empty() {
            return Err(MdpError::EmptyInput);
        }
        Ok(Self(bytes.into()))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[u8]> for Input {
    fn as_ref(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Input({} bytes)", self.0.len())
    }
}

/// The observed substring `x'` of a seed: `width` bytes starting at `offset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateWindow {
    offset: usize,
    bytes: Vec<u8>,
}

impl StateWindow {
    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn width(&self) -> usize {
        self.bytes.len()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Byte range `[offset, offset + width)` covered in the owning input.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.bytes.len()
    }
}

/// How window bytes are turned into network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ByteEncoding {
    /// `byte / 255`, values in `[0, 1]`.
    #[default]
    Normalized,
    /// The raw byte value as a float, values in `[0, 255]`.
    Raw,
}

/// Numeric form of a window as fed to the Q-network.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Inverse of [`encode_state`] for normalized vectors.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

pub fn extract_state(input: &Input, offset: usize, width: usize) -> Result<StateWindow, MdpError> {
    if width == 0 {
        return Err(MdpError::ZeroWidth);
    }
    let len = input.len();
    match offset.checked_add(width) {
        Some(end) if end <= len => Ok(StateWindow {
            offset,
            bytes: input.as_bytes()[offset..end].to_vec(),
        }),
        _ => Err(MdpError::OutOfRange { offset, width, len }),
    }
}

/// Uniform offset in `{0, ..., input_len - width}`.
pub fn random_offset<R: Rng + ?Sized>(
    rng: &mut R,
    input_len: usize,
    width: usize,
) -> Result<usize, MdpError> {
    let range = offset_range(input_len, width, OffsetRegion::Whole)?;
    Ok(rng.gen_range(range))
}

/// Part of the seed that window offsets are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetRegion {
    #[default]
    Whole,
    /// Windows lying entirely inside `[0, len / 2)`.
    FirstHalf,
    /// Windows starting at or after `len / 2`.
    SecondHalf,
}

/// Valid window offsets for `region`, as an inclusive range.
pub fn offset_range(
    input_len: usize,
    width: usize,
    region: OffsetRegion,
) -> Result<RangeInclusive<usize>, MdpError> {
    if width == 0 {
        return Err(MdpError::ZeroWidth);
    }
    let out_of_range = MdpError::OutOfRange {
        offset: 0,
        width,
        len: input_len,
    };
    let last = input_len.checked_sub(width).ok_or(out_of_range.clone())?;
    let half = input_len / 2;
    match region {
        OffsetRegion::Whole => Ok(0..=last),
        OffsetRegion::FirstHalf => {
            let hi = half.checked_sub(width).ok_or(out_of_range)?;
            Ok(0..=hi)
        }
        OffsetRegion::SecondHalf => {
            if half > last {
                return Err(out_of_range);
            }
            Ok(half..=last)
        }
    }
}

pub fn random_offset_in<R: Rng + ?Sized>(
    rng: &mut R,
    input_len: usize,
    width: usize,
    region: OffsetRegion,
) -> Result<usize, MdpError> {
    Ok(rng.gen_range(offset_range(input_len, width, region)?))
}

pub fn encode_state(window: &StateWindow) -> StateVector {
    encode_state_with(window, ByteEncoding::Normalized, window.width())
}

/// Encodes `window` into exactly `dim` values, zero-padding windows that were
/// shrunk below the network's input width and truncating wider ones.
pub fn encode_state_with(window: &StateWindow, encoding: ByteEncoding, dim: usize) -> StateVector {
    let scale = match encoding {
        ByteEncoding::Normalized => 255.0,
        ByteEncoding::Raw => 1.0,
    };
    let mut values: Vec<f64> = window
        .bytes
        .iter()
        .take(dim)
        .map(|&b| f64::from(b) / scale)
        .collect();
    values.resize(dim, 0.0);
    StateVector(values)
}

/// Checks that a seed can host windows of `width` bytes.
pub fn validate_seed(seed: &Input, width: usize) -> Result<(), MdpError> {
    if width == 0 {
        return Err(MdpError::ZeroWidth);
    }
    if seed.len() < width {
        return Err(MdpError::SeedTooShort {
            len: seed.len(),
            width,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn input(bytes: &[u8]) -> Input {
        Input::new(bytes.to_vec()).unwrap()
    }

    #[test]
    fn prefix_window() {
        let data: Vec<u8> = (0..168u8).collect();
        let w = extract_state(&input(&data), 0, 32).unwrap();
        assert_eq!(w.bytes(), &data[..32]);
        assert_eq!(w.offset(), 0);
        assert_eq!(w.width(), 32);
    }

    #[test]
    fn middle_window() {
        let w = extract_state(&input(b"abcdef"), 2, 3).unwrap();
        assert_eq!(w.bytes(), b"cde");
    }

    #[test]
    fn out_of_range_window() {
        let err = extract_state(&input(b"abcdef"), 5, 4).unwrap_err();
        assert_eq!(
            err,
            MdpError::OutOfRange {
                offset: 5,
                width: 4,
                len: 6
            }
        );
        assert!(err.to_string().contains('5') && err.to_string().contains('6'));
    }

    #[test]
    fn zero_width_rejected() {
        assert_eq!(extract_state(&input(b"ab"), 0, 0), Err(MdpError::ZeroWidth));
    }

    #[test]
    fn offset_overflow_is_range_error() {
        assert!(matches!(
            extract_state(&input(b"ab"), usize::MAX, 2),
            Err(MdpError::OutOfRange { .. })
        ));
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(Input::new(Vec::new()), Err(MdpError::EmptyInput));
    }

    #[test]
    fn singleton_offset_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(random_offset(&mut rng, 32, 32).unwrap(), 0);
        }
    }

    #[test]
    fn offset_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            assert!(random_offset(&mut rng, 100, 32).unwrap() <= 68);
        }
        assert!(random_offset(&mut rng, 10, 11).is_err());
    }

    #[test]
    fn half_regions_do_not_overlap() {
        let first = offset_range(200, 32, OffsetRegion::FirstHalf).unwrap();
        let second = offset_range(200, 32, OffsetRegion::SecondHalf).unwrap();
        assert_eq!(first, 0..=68);
        assert_eq!(second, 100..=168);
        assert!(offset_range(40, 32, OffsetRegion::FirstHalf).is_err());
    }

    #[test]
    fn encoding_endpoints() {
        let w = extract_state(&input(&[0, 0, 255, 51]), 0, 4).unwrap();
        let v = encode_state(&w);
        assert_eq!(v.values(), &[0.0, 0.0, 1.0, 0.2]);
        assert_eq!(v.to_bytes(), vec![0, 0, 255, 51]);
    }

    #[test]
    fn raw_encoding_and_padding() {
        let w = extract_state(&input(&[7, 9]), 0, 2).unwrap();
        let v = encode_state_with(&w, ByteEncoding::Raw, 4);
        assert_eq!(v.values(), &[7.0, 9.0, 0.0, 0.0]);
    }

    #[test]
    fn short_seed_rejected() {
        assert_eq!(
            validate_seed(&input(b"abc"), 32),
            Err(MdpError::SeedTooShort { len: 3, width: 32 })
        );
    }
}
