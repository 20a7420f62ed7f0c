//! Frame-rate and token-budget arithmetic.

use super::CorpusError;

/// Output frame rate of the audio encoder.
pub const ENCODER_RATE_HZ: f64 = 25.0;
/// Frame rate after the 2x adapter downsampling.
pub const ADAPTER_RATE_HZ: f64 = 12.5;
pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// 25 Hz encoder frames to 12.5 Hz adapter frames. Odd counts are padded by
/// one frame before pooling, so the result is `ceil(n / 2)`.
pub fn downsample_frames(n_frames: i64) -> Result<i64, CorpusError> {
    if n_frames < 0 {
        return Err(CorpusError::Argument(format!(
            "frame count must be non-negative, got {n_frames}"
        )));
    }
    Ok((n_frames + 1) / 2)
}

/// Token count for `hours` of audio at `rate_hz`, rounded half away from zero.
pub fn tokens_for_hours(hours: f64, rate_hz: f64) -> Result<u64, CorpusError> {
    if !(hours >= 0.0) || !hours.is_finite() {
        return Err(CorpusError::Argument(format!(
            "hours must be a finite non-negative number, got {hours}"
        )));
    }
    if !(rate_hz > 0.0) || !rate_hz.is_finite() {
        return Err(CorpusError::Argument(format!(
            "rate must be a finite positive number, got {rate_hz}"
        )));
    }
    // f64::round rounds half away from zero
    Ok((hours * SECONDS_PER_HOUR * rate_hz).round() as u64)
}

/// `round(duration_s * rate_hz)`, the token count implied by a duration.
pub fn token_count_for_duration(duration_s: f64, rate_hz: f64) -> usize {
    (duration_s * rate_hz).round().max(0.0) as usize
}
