//! Segment geometry of the network's output axis.
//!
//! Each output position sees a 128-frame segment; consecutive segments start
//! 64 frames apart.

use crate::error::{Error, Result};

pub const SEGMENT_FRAMES: usize = 128;
pub const SEGMENT_HOP: usize = 64;

/// Number of segment posteriors produced for an `n`-frame input: the time
/// axis is halved (floor) by six poolings and the 2x2 L7 filter removes one
/// more position, so `K = floor(n / 64) - 1`.
pub fn segment_count(frames: usize) -> Result<usize> {
    if frames < SEGMENT_FRAMES {
        return Err(Error::TooShort { frames });
    }
    Ok(frames / SEGMENT_HOP - 1)
}

/// `[start, end)` frame range of segment `k` out of `count`.
pub fn segment_span(k: usize, count: usize) -> Result<(usize, usize)> {
    if k >= count {
        return Err(Error::InvalidArgument(format!(
            "segment index {k} out of range (K = {count})"
        )));
    }
    Ok((SEGMENT_HOP * k, SEGMENT_HOP * k + SEGMENT_FRAMES))
}
