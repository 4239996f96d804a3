//! The action set: probabilistic string-rewrite rules applied to a seed at
//! the observed window.
//!
//! Every action consumes the pristine seed and the current window and
//! produces a new [`Input`]; the seed itself is never touched. View actions
//! (shifts and width changes) leave the input as is and instead report the
//! window the agent should observe next.

mod dictionary;

pub use dictionary::{build_dictionary, TokenDictionary, DEFAULT_MAX_TOKENS, DEFAULT_MIN_TOKEN_LEN};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{Input, StateWindow};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MutationError {
    #[error("deleting {width} bytes would leave an empty input")]
    DegenerateInput { width: usize },
    #[error("window {offset}+{width} is not inside an input of {len} bytes")]
    BadWindow {
        offset: usize,
        width: usize,
        len: usize,
    },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("dictionary: {0}")]
    Dictionary(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionKind {
    /// Flip each bit of the window independently with probability `ratio`.
    BitFlip { ratio: f64 },
    /// Multiply the loop-wide bit-flip ratio scale by `factor`.
    AdjustFlipRatio { factor: f64 },
    InsertToken,
    ShuffleWindow,
    ShuffleObjectSegments,
    CopyWindowInsert,
    CopyWindowOverwrite,
    DeleteWindow,
    ShiftOffsetLeft,
    ShiftOffsetRight,
    GrowWidth,
    ShrinkWidth,
}

impl ActionKind {
    pub fn validate(&self) -> Result<(), MutationError> {
        match *self {
            ActionKind::BitFlip { ratio } if !(ratio > 0.0 && ratio <= 1.0) => Err(
                MutationError::InvalidAction(format!("bit flip ratio {ratio} outside (0, 1]")),
            ),
            ActionKind::AdjustFlipRatio { factor } if !(factor > 0.0 && factor.is_finite()) => {
                Err(MutationError::InvalidAction(format!(
                    "flip ratio factor {factor} must be positive"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Short stable name used in reports and logs.
    pub fn name(&self) -> String {
        match self {
            ActionKind::BitFlip { ratio } => format!("bit_flip({ratio})"),
            ActionKind::AdjustFlipRatio { factor } => format!("adjust_flip_ratio({factor})"),
            ActionKind::InsertToken => "insert_token".into(),
            ActionKind::ShuffleWindow => "shuffle_window".into(),
            ActionKind::ShuffleObjectSegments => "shuffle_object_segments".into(),
            ActionKind::CopyWindowInsert => "copy_window_insert".into(),
            ActionKind::CopyWindowOverwrite => "copy_window_overwrite".into(),
            ActionKind::DeleteWindow => "delete_window".into(),
            ActionKind::ShiftOffsetLeft => "shift_offset_left".into(),
            ActionKind::ShiftOffsetRight => "shift_offset_right".into(),
            ActionKind::GrowWidth => "grow_width".into(),
            ActionKind::ShrinkWidth => "shrink_width".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    #[serde(flatten)]
    pub kind: ActionKind,
    pub enabled: bool,
}

impl ActionSpec {
    pub fn on(kind: ActionKind) -> Self {
        Self {
            kind,
            enabled: true,
        }
    }

    pub fn off(kind: ActionKind) -> Self {
        Self {
            kind,
            enabled: false,
        }
    }
}

pub const DEFAULT_FLIP_RATIO: f64 = 0.01;

/// The full catalogue; only the seven seed-mutating actions are enabled.
pub fn default_actions() -> Vec<ActionSpec> {
    use ActionKind::*;
    vec![
        ActionSpec::on(BitFlip {
            ratio: DEFAULT_FLIP_RATIO,
        }),
        ActionSpec::on(InsertToken),
        ActionSpec::on(ShuffleWindow),
        ActionSpec::on(ShuffleObjectSegments),
        ActionSpec::on(CopyWindowInsert),
        ActionSpec::on(CopyWindowOverwrite),
        ActionSpec::on(DeleteWindow),
        ActionSpec::off(AdjustFlipRatio { factor: 2.0 }),
        ActionSpec::off(AdjustFlipRatio { factor: 0.5 }),
        ActionSpec::off(ShiftOffsetLeft),
        ActionSpec::off(ShiftOffsetRight),
        ActionSpec::off(GrowWidth),
        ActionSpec::off(ShrinkWidth),
    ]
}

/// The enabled actions in catalogue order; index `i` is Q-network output `i`.
pub fn enabled_actions(specs: &[ActionSpec]) -> Result<Vec<ActionKind>, MutationError> {
    let mut out = Vec::new();
    for spec in specs.iter().filter(|s| s.enabled) {
        spec.kind.validate()?;
        out.push(spec.kind);
    }
    if out.is_empty() {
        return Err(MutationError::InvalidAction(
            "at least one action must be enabled".into(),
        ));
    }
    Ok(out)
}

/// Half-open byte range of one structural object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectBounds {
    pub start: usize,
    pub end: usize,
}

impl ObjectBounds {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Delimiters of the objects that object-level actions operate on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectMarkers {
    pub open: String,
    pub close: String,
}

impl Default for ObjectMarkers {
    fn default() -> Self {
        Self {
            open: "obj".into(),
            close: "endobj".into(),
        }
    }
}

fn occurs_at(hay: &[u8], needle: &[u8], pos: usize) -> bool {
    hay.get(pos..pos + needle.len()) == Some(needle)
}

fn find_from(hay: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if needle.is_empty() || hay.len() < needle.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&p| occurs_at(hay, needle, p))
}

/// True when the `open` occurrence at `pos` is really part of a `close`
/// marker (as `obj` is inside `endobj`).
fn inside_close(hay: &[u8], open_len: usize, close: &[u8], pos: usize) -> bool {
    if close.len() < open_len {
        return false;
    }
    let lo = (pos + open_len).saturating_sub(close.len());
    (lo..=pos).any(|q| occurs_at(hay, close, q))
}

fn open_at(hay: &[u8], open: &[u8], close: &[u8], pos: usize) -> bool {
    occurs_at(hay, open, pos) && !inside_close(hay, open.len(), close, pos)
}

fn rfind_open(hay: &[u8], open: &[u8], close: &[u8], at_or_before: usize) -> Option<usize> {
    if open.is_empty() || hay.len() < open.len() {
        return None;
    }
    let top = at_or_before.min(hay.len() - open.len());
    (0..=top).rev().find(|&p| open_at(hay, open, close, p))
}

fn find_open(hay: &[u8], open: &[u8], close: &[u8], from: usize) -> Option<usize> {
    if open.is_empty() || hay.len() < open.len() {
        return None;
    }
    (from..=hay.len() - open.len()).find(|&p| open_at(hay, open, close, p))
}

/// The object bracketing `offset`: from the nearest opening marker at or
/// before it to just past the first closing marker after that. Falls back to
/// the whole input when no object brackets the offset.
pub fn locate_object_bounds(
    input: &[u8],
    offset: usize,
    open_marker: &[u8],
    close_marker: &[u8],
) -> ObjectBounds {
    let whole = ObjectBounds {
        start: 0,
        end: input.len(),
    };
    let Some(start) = rfind_open(input, open_marker, close_marker, offset) else {
        return whole;
    };
    let Some(close) = find_from(input, close_marker, start + open_marker.len()) else {
        return whole;
    };
    let end = close + close_marker.len();
    if offset < end {
        ObjectBounds { start, end }
    } else {
        whole
    }
}

/// Per-run state that some actions read or adjust.
#[derive(Debug, Clone)]
pub struct MutationContext {
    pub markers: ObjectMarkers,
    /// Multiplier applied to every bit-flip ratio (see `AdjustFlipRatio`).
    pub flip_ratio_scale: f64,
    /// Upper bound for `GrowWidth`.
    pub max_width: usize,
}

impl Default for MutationContext {
    fn default() -> Self {
        Self {
            markers: ObjectMarkers::default(),
            flip_ratio_scale: 1.0,
            max_width: 32,
        }
    }
}

/// What an action did besides producing the output input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Effect {
    /// Bytes were rewritten in `[start, end)` of the result.
    Rewrote { start: usize, end: usize },
    Inserted { at: usize, len: usize },
    Deleted { at: usize, len: usize },
    /// The action could not act (empty dictionary, object too small).
    NoOp,
    /// Next observation should use this window.
    View { offset: usize, width: usize },
    FlipRatioScale(f64),
}

#[derive(Debug, Clone)]
pub struct Mutation {
    pub input: Input,
    pub effect: Effect,
}

fn unchanged(input: &Input, effect: Effect) -> Mutation {
    Mutation {
        input: input.clone(),
        effect,
    }
}

fn rebuild(bytes: Vec<u8>, effect: Effect) -> Result<Mutation, MutationError> {
    let len = bytes.len();
    let input = Input::new(bytes).map_err(|_| MutationError::DegenerateInput { width: len })?;
    Ok(Mutation { input, effect })
}

pub fn apply_action<R: Rng + ?Sized>(
    input: &Input,
    window: &StateWindow,
    action: &ActionKind,
    dict: &TokenDictionary,
    ctx: &MutationContext,
    rng: &mut R,
) -> Result<Mutation, MutationError> {
    let n = input.len();
    let range = window.range();
    if range.end > n || window.width() == 0 {
        return Err(MutationError::BadWindow {
            offset: window.offset(),
            width: window.width(),
            len: n,
        });
    }
    let (offset, width) = (range.start, range.len());
    let src = input.as_bytes();

    match *action {
        ActionKind::BitFlip { ratio } => {
            let p = (ratio * ctx.flip_ratio_scale).clamp(0.0, 1.0);
            let mut out = src.to_vec();
            for byte in &mut out[range.clone()] {
                let mut mask = 0u8;
                for bit in 0..8 {
                    if rng.gen_bool(p) {
                        mask |= 1 << bit;
                    }
                }
                *byte ^= mask;
            }
            rebuild(
                out,
                Effect::Rewrote {
                    start: range.start,
                    end: range.end,
                },
            )
        }
        ActionKind::AdjustFlipRatio { factor } => Ok(unchanged(input, Effect::FlipRatioScale(factor))),
        ActionKind::InsertToken => {
            let Some(token) = dict.tokens().choose(rng) else {
                return Ok(unchanged(input, Effect::NoOp));
            };
            let at = rng.gen_range(offset..=offset + width);
            let mut out = Vec::with_capacity(n + token.len());
            out.extend_from_slice(&src[..at]);
            out.extend_from_slice(token);
            out.extend_from_slice(&src[at..]);
            rebuild(
                out,
                Effect::Inserted {
                    at,
                    len: token.len(),
                },
            )
        }
        ActionKind::ShuffleWindow => {
            let mut out = src.to_vec();
            out[range.clone()].shuffle(rng);
            rebuild(
                out,
                Effect::Rewrote {
                    start: range.start,
                    end: range.end,
                },
            )
        }
        ActionKind::ShuffleObjectSegments => {
            let bounds = locate_object_bounds(
                src,
                offset,
                ctx.markers.open.as_bytes(),
                ctx.markers.close.as_bytes(),
            );
            if bounds.len() < 3 {
                return Ok(unchanged(input, Effect::NoOp));
            }
            let cuts = rand::seq::index::sample(rng, bounds.len() - 1, 2);
            let (mut c1, mut c2) = (cuts.index(0), cuts.index(1));
            if c1 > c2 {
                std::mem::swap(&mut c1, &mut c2);
            }
            let (c1, c2) = (bounds.start + 1 + c1, bounds.start + 1 + c2);
            let segments = [
                &src[bounds.start..c1],
                &src[c1..c2],
                &src[c2..bounds.end],
            ];
            const ORDERS: [[usize; 3]; 6] =
                [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let order = ORDERS[rng.gen_range(0..ORDERS.len())];
            let mut out = Vec::with_capacity(n);
            out.extend_from_slice(&src[..bounds.start]);
            for i in order {
                out.extend_from_slice(segments[i]);
            }
            out.extend_from_slice(&src[bounds.end..]);
            rebuild(
                out,
                Effect::Rewrote {
                    start: bounds.start,
                    end: bounds.end,
                },
            )
        }
        ActionKind::CopyWindowInsert => {
            let at = rng.gen_range(0..=n);
            let mut out = Vec::with_capacity(n + width);
            out.extend_from_slice(&src[..at]);
            out.extend_from_slice(window.bytes());
            out.extend_from_slice(&src[at..]);
            rebuild(out, Effect::Inserted { at, len: width })
        }
        ActionKind::CopyWindowOverwrite => {
            let at = rng.gen_range(0..=n - width);
            let mut out = src.to_vec();
            out[at..at + width].copy_from_slice(window.bytes());
            rebuild(
                out,
                Effect::Rewrote {
                    start: at,
                    end: at + width,
                },
            )
        }
        ActionKind::DeleteWindow => {
            if width >= n {
                return Err(MutationError::DegenerateInput { width });
            }
            let mut out = Vec::with_capacity(n - width);
            out.extend_from_slice(&src[..offset]);
            out.extend_from_slice(&src[range.end..]);
            rebuild(out, Effect::Deleted { at: offset, len: width })
        }
        ActionKind::ShiftOffsetLeft | ActionKind::ShiftOffsetRight => {
            let open = ctx.markers.open.as_bytes();
            let close = ctx.markers.close.as_bytes();
            let current = locate_object_bounds(src, offset, open, close);
            let target = if matches!(action, ActionKind::ShiftOffsetLeft) {
                current
                    .start
                    .checked_sub(1)
                    .and_then(|p| rfind_open(src, open, close, p))
                    .unwrap_or(0)
            } else {
                find_open(src, open, close, current.start.max(offset) + 1).unwrap_or(n)
            };
            Ok(unchanged(
                input,
                Effect::View {
                    offset: target.min(n - width),
                    width,
                },
            ))
        }
        ActionKind::GrowWidth => {
            let new_width = (width + 1).min(ctx.max_width.max(1)).min(n);
            Ok(unchanged(
                input,
                Effect::View {
                    offset: offset.min(n - new_width),
                    width: new_width,
                },
            ))
        }
        ActionKind::ShrinkWidth => Ok(unchanged(
            input,
            Effect::View {
                offset,
                width: width.saturating_sub(1).max(1),
            },
        )),
    }
}
