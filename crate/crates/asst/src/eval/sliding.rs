//! Offset planning for sliding a fixed-length model along a longer video.

/// Evaluation offsets in seconds: 0, stride, 2·stride, … plus one final
/// offset flush with the video end. A video shorter than the model window
/// yields the single offset 0 (the caller pads).
pub fn sliding_offsets(duration: f64, window: f64, stride: f64) -> Vec<f64> {
    assert!(window > 0.0 && stride > 0.0);
    if duration <= window {
        return vec![0.0];
    }
    let last = duration - window;
    let mut offsets = Vec::new();
    let mut o = 0.0;
    while o < last - 1e-9 {
        offsets.push(o);
        o += stride;
    }
    offsets.push(last);
    offsets
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_video_single_evaluation() {
        assert_eq!(sliding_offsets(5.0, 10.0, 5.0), vec![0.0]);
        assert_eq!(sliding_offsets(10.0, 10.0, 5.0), vec![0.0]);
    }

    #[test]
    fn double_duration_half_stride() {
        let tau_m = 10.0;
        let offsets = sliding_offsets(2.0 * tau_m, tau_m, tau_m / 2.0);
        assert_eq!(offsets, vec![0.0, 5.0, 10.0]);
    }

    #[test]
    fn final_offset_is_flush() {
        let offsets = sliding_offsets(23.0, 10.0, 4.0);
        assert_eq!(offsets, vec![0.0, 4.0, 8.0, 12.0, 13.0]);
    }
}
