//! Detection-mode training augmentation: random temporal stretch/compress
//! followed by a model-length crop, with annotations remapped into the
//! window's time base.

use crate::clip::ClipWindow;
use crate::data::FeatureSequence;
use crate::error::Result;
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Debug)]
pub struct AugmentedSample {
    /// Exactly model_frames rows (zero-padded at the end when the stretched
    /// video came up short).
    pub features: Tensor,
    /// Ground truths visible in the window (>= half of each clip), clipped
    /// to it, with their class ids.
    pub gts: Vec<(ClipWindow, usize)>,
    pub scale: f64,
    pub offset_frames: usize,
}

/// Align-corners row resampling on plain values (no tape involvement).
fn resample_rows(values: &[f64], m: usize, cols: usize, target: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(target * cols);
    for j in 0..target {
        let coord = if target == 1 || m == 1 {
            0.0
        } else {
            j as f64 * (m - 1) as f64 / (target - 1) as f64
        };
        let i0 = (coord.floor() as usize).min(m - 1);
        let f = coord - i0 as f64;
        if f == 0.0 || i0 + 1 >= m {
            out.extend_from_slice(&values[i0 * cols..(i0 + 1) * cols]);
        } else {
            let r0 = &values[i0 * cols..(i0 + 1) * cols];
            let r1 = &values[(i0 + 1) * cols..(i0 + 2) * cols];
            out.extend(r0.iter().zip(r1).map(|(a, b)| (1.0 - f) * a + f * b));
        }
    }
    out
}

/// Draw a stretch scale, resample the video, crop a model-length window at a
/// uniform offset and remap annotations; clips with less than half their
/// span visible are dropped.
pub fn augment_sample(
    seq: &FeatureSequence,
    anns: &[(ClipWindow, usize)],
    model_frames: usize,
    scale_range: (f64, f64),
    rng: &mut impl Rng,
) -> Result<AugmentedSample> {
    let (m, cols) = (seq.frames(), seq.channels());
    let fr = seq.frame_rate;
    let scale_draw = if scale_range.0 == scale_range.1 {
        scale_range.0
    } else {
        rng.gen_range(scale_range.0..scale_range.1)
    };
    let m_s = ((m as f64 * scale_draw).round() as usize).max(2);
    // The realized scale accounts for frame-count rounding so that feature
    // time and annotation time stay aligned.
    let scale = m_s as f64 / m as f64;
    let stretched = resample_rows(seq.features.values(), m, cols, m_s);

    let offset_frames = if m_s > model_frames {
        rng.gen_range(0..=m_s - model_frames)
    } else {
        0
    };
    let mut window = vec![0.0; model_frames * cols];
    let copy_rows = model_frames.min(m_s - offset_frames);
    window[..copy_rows * cols].copy_from_slice(
        &stretched[offset_frames * cols..(offset_frames + copy_rows) * cols],
    );

    let tau_w = model_frames as f64 / fr;
    let offset_s = offset_frames as f64 / fr;
    let mut gts = Vec::new();
    for (w, class) in anns {
        let s = w.start * scale - offset_s;
        let e = w.end * scale - offset_s;
        let visible = (e.min(tau_w) - s.max(0.0)).max(0.0);
        if visible / (e - s) >= 0.5 {
            gts.push((
                ClipWindow {
                    start: s.max(0.0),
                    end: e.min(tau_w),
                },
                *class,
            ));
        }
    }
    Ok(AugmentedSample {
        features: Tensor::new(vec![model_frames, cols], window)?,
        gts,
        scale,
        offset_frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(m: usize) -> FeatureSequence {
        let vals: Vec<f64> = (0..m * 2).map(|i| i as f64).collect();
        let fr = 2.0;
        FeatureSequence::new(Tensor::new(vec![m, 2], vals).unwrap(), m as f64 / fr, fr).unwrap()
    }

    #[test]
    fn unit_scale_zero_offset_is_identity_crop() {
        let s = seq(12);
        let anns = vec![(ClipWindow::new(1.0, 3.0).unwrap(), 0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let aug = augment_sample(&s, &anns, 12, (1.0, 1.0), &mut rng).unwrap();
        assert_eq!(aug.offset_frames, 0);
        assert_eq!(aug.features.values(), s.features.values());
        assert_eq!(aug.gts.len(), 1);
        assert!((aug.gts[0].0.start - 1.0).abs() < 1e-12);
        assert!((aug.gts[0].0.end - 3.0).abs() < 1e-12);
    }

    #[test]
    fn stretch_lengthens_annotations() {
        let s = seq(16);
        let anns = vec![(ClipWindow::new(0.0, 4.0).unwrap(), 0)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let aug = augment_sample(&s, &anns, 16, (1.25, 1.25), &mut rng).unwrap();
        // 16 frames * 1.25 = 20 frames; the crop may cut the clip, but the
        // realized scale must match the frame rounding.
        assert!((aug.scale - 20.0 / 16.0).abs() < 1e-12);
        if aug.offset_frames == 0 {
            assert!((aug.gts[0].0.length() - 4.0 * aug.scale).abs() < 1e-9);
        }
    }

    #[test]
    fn clips_outside_the_crop_are_dropped() {
        let s = seq(20);
        // Annotation at the very end; force a crop at the start.
        let anns = vec![(ClipWindow::new(8.0, 10.0).unwrap(), 0)];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // scale 1: stretched length 20, window 10 frames (5 s).
        let mut found_drop = false;
        for _ in 0..50 {
            let aug = augment_sample(&s, &anns, 10, (1.0, 1.0), &mut rng).unwrap();
            if aug.offset_frames == 0 {
                assert!(aug.gts.is_empty(), "clip at [8,10]s invisible from offset 0");
                found_drop = true;
            }
        }
        assert!(found_drop, "never sampled offset 0 in 50 draws");
    }

    #[test]
    fn half_visible_boundary_keeps_clip() {
        let s = seq(20);
        let anns = vec![(ClipWindow::new(4.0, 6.0).unwrap(), 3)];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let aug = augment_sample(&s, &anns, 10, (1.0, 1.0), &mut rng).unwrap();
            let tau_w = 5.0;
            let offset_s = aug.offset_frames as f64 / 2.0;
            let visible = (6.0_f64.min(offset_s + tau_w) - 4.0_f64.max(offset_s)).max(0.0) / 2.0;
            assert_eq!(
                !aug.gts.is_empty(),
                visible >= 0.5,
                "offset {offset_s}: visibility {visible}"
            );
            if let Some((w, class)) = aug.gts.first() {
                assert_eq!(*class, 3);
                assert!(w.start >= -1e-12 && w.end <= tau_w + 1e-12);
            }
        }
    }
}
