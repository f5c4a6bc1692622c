use crate::autograd::AttnMask;
use crate::error::{Error, Result};

/// Cross-attention mask between `n_extra + frames` query tokens and
/// `audio_frames` audio rows. Leading non-frame tokens see every audio row;
/// frame token `t` sees only audio row `t`.
pub fn alignment_mask(frames: usize, audio_frames: usize, n_extra: usize) -> Result<AttnMask> {
    banded_alignment_mask(frames, audio_frames, n_extra, 0)
}

/// Like [`alignment_mask`] but frame `t` sees audio rows `|t - s| <= bandwidth`.
pub fn banded_alignment_mask(
    frames: usize,
    audio_frames: usize,
    n_extra: usize,
    bandwidth: usize,
) -> Result<AttnMask> {
    if frames != audio_frames {
        return Err(Error::validation(format!(
            "alignment mask needs pre-aligned audio: {frames} motion frames vs {audio_frames} audio rows"
        )));
    }
    if frames == 0 {
        return Err(Error::validation("alignment mask needs at least one frame"));
    }
    Ok(AttnMask::from_fn(n_extra + frames, audio_frames, |r, c| {
        r < n_extra || (r - n_extra).abs_diff(c) <= bandwidth
    }))
}
