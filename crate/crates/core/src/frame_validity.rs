//! Empty-frame detection by Sobel edge density, and the clip removal rule
//! built on it: a clip goes when strictly more than half of its frames are
//! invalid.

use serde::{Deserialize, Serialize};

use crate::clip_sampling::ClipIndex;
use crate::media_io::Frame;
use crate::{Error, Result};

/// Largest possible Sobel magnitude on 8-bit input: `sqrt(1020² + 1020²)`.
pub const MAX_SOBEL_MAGNITUDE: f64 = 1442.497833620557;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeFilterConfig {
    /// Gradient magnitude a pixel must exceed to count as an edge.
    pub tau_mag: f64,
    /// Minimum edge density of a valid frame.
    pub tau_density: f64,
    pub enabled: bool,
}

impl Default for EdgeFilterConfig {
    fn default() -> Self {
        Self {
            tau_mag: 32.0,
            tau_density: 0.01,
            enabled: true,
        }
    }
}

impl EdgeFilterConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau_density) || self.tau_mag.is_nan() || self.tau_mag < 0.0 {
            return Err(Error::Config(format!(
                "edge filter needs tau_mag >= 0 and tau_density in [0, 1], got {} and {}",
                self.tau_mag, self.tau_density
            )));
        }
        Ok(())
    }
}

/// BT.601 luma, rounded. Grayscale frames pass through unchanged.
pub fn to_grayscale(frame: &Frame) -> Result<Frame> {
    match frame.channels() {
        1 => Ok(frame.clone()),
        3 => {
            let pixels = frame
                .pixels()
                .chunks_exact(3)
                .map(|p| {
                    let y =
                        0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]);
                    y.round().clamp(0.0, 255.0) as u8
                })
                .collect();
            Frame::gray(frame.width(), frame.height(), pixels)
        }
        c => Err(Error::UnsupportedChannels(c)),
    }
}

/// Gradient magnitudes over the interior pixels of a frame; entry `(x, y)`
/// belongs to frame pixel `(x + 1, y + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl GradientMap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn transpose(&self) -> GradientMap {
        let mut values = Vec::with_capacity(self.values.len());
        for x in 0..self.width {
            for y in 0..self.height {
                values.push(self.get(x, y));
            }
        }
        GradientMap {
            width: self.height,
            height: self.width,
            values,
        }
    }
}

/// `sqrt(Gx² + Gy²)` with the 3x3 Sobel kernels; border pixels are skipped.
pub fn sobel_magnitude(gray: &Frame) -> Result<GradientMap> {
    if gray.channels() != 1 {
        return Err(Error::UnsupportedChannels(gray.channels()));
    }
    let (w, h) = (gray.width(), gray.height());
    if w < 3 || h < 3 {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
        });
    }
    let px = gray.pixels();
    let at = |x: usize, y: usize| f64::from(px[y * w + x]);
    let mut values = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            values.push((gx * gx + gy * gy).sqrt());
        }
    }
    Ok(GradientMap {
        width: w - 2,
        height: h - 2,
        values,
    })
}

/// Fraction of interior pixels whose magnitude exceeds `tau_mag`.
pub fn edge_density(gray: &Frame, tau_mag: f64) -> Result<f64> {
    let map = sobel_magnitude(gray)?;
    let edges = map.values.iter().filter(|&&m| m > tau_mag).count();
    Ok(edges as f64 / map.values.len() as f64)
}

pub fn is_frame_valid(frame: &Frame, cfg: &EdgeFilterConfig) -> Result<bool> {
    if !cfg.enabled {
        return Ok(true);
    }
    Ok(edge_density(&to_grayscale(frame)?, cfg.tau_mag)? >= cfg.tau_density)
}

/// A sampled clip with its frames, as handed to [`filter_clips`].
#[derive(Clone, Debug)]
pub struct CandidateClip<'a> {
    pub video_id: &'a str,
    pub clip: ClipIndex,
    pub frames: Vec<&'a Frame>,
}

/// One audit line per examined clip.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipAudit {
    pub video_id: String,
    pub clip_start: usize,
    pub invalid: usize,
    #[serde(rename = "L")]
    pub clip_length: usize,
    pub removed: bool,
    #[serde(rename = "override")]
    pub overridden: bool,
}

impl ClipAudit {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("audit entry serializes")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterOutcome {
    /// Indices into the input slice of the clips that survive, in input order.
    pub retained: Vec<usize>,
    pub audit: Vec<ClipAudit>,
}

/// Removes every clip with more than `L / 2` invalid frames. When that would
/// leave nothing, the clip with the fewest invalid frames (earliest start on
/// ties) is kept and flagged as an override.
///
/// Pass all clips of one class at once: the override guarantees the class
/// keeps a prototype.
pub fn filter_clips(clips: &[CandidateClip<'_>], cfg: &EdgeFilterConfig) -> Result<FilterOutcome> {
    let mut counts = Vec::with_capacity(clips.len());
    for c in clips {
        let mut invalid = 0;
        for frame in &c.frames {
            if !is_frame_valid(frame, cfg)? {
                invalid += 1;
            }
        }
        counts.push(invalid);
    }
    let described: Vec<_> = clips
        .iter()
        .map(|c| (c.video_id, c.clip, c.frames.len()))
        .collect();
    Ok(decide_removals(&described, &counts))
}

/// The removal rule on precomputed invalid-frame counts. `clips` carries
/// `(video_id, clip, number of frames)`.
pub fn decide_removals(clips: &[(&str, ClipIndex, usize)], invalid: &[usize]) -> FilterOutcome {
    assert_eq!(clips.len(), invalid.len());
    let mut audit: Vec<ClipAudit> = clips
        .iter()
        .zip(invalid)
        .map(|(&(video_id, clip, len), &invalid)| ClipAudit {
            video_id: video_id.to_string(),
            clip_start: clip.start,
            invalid,
            clip_length: len,
            // strictly more than half
            removed: 2 * invalid > len,
            overridden: false,
        })
        .collect();
    let mut retained: Vec<usize> = (0..audit.len()).filter(|&i| !audit[i].removed).collect();
    if retained.is_empty() && !audit.is_empty() {
        let best = (0..audit.len())
            .min_by_key(|&i| (audit[i].invalid, audit[i].clip_start, i))
            .expect("non-empty");
        audit[best].removed = false;
        audit[best].overridden = true;
        log::warn!(
            "every clip would be removed; keeping clip at frame {} of video {} ({} of {} frames invalid)",
            audit[best].clip_start,
            audit[best].video_id,
            audit[best].invalid,
            audit[best].clip_length
        );
        retained.push(best);
    }
    FilterOutcome { retained, audit }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step_frame() -> Frame {
        let px = (0..64).map(|i| if i % 8 >= 4 { 255 } else { 0 }).collect();
        Frame::gray(8, 8, px).unwrap()
    }

    /// Direct 3x3 correlation, written independently of `sobel_magnitude`.
    fn oracle_magnitude(frame: &Frame, x: usize, y: usize) -> f64 {
        const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
        let (mut gx, mut gy) = (0.0, 0.0);
        for (dy, krow) in KX.iter().enumerate() {
            for (dx, _) in krow.iter().enumerate() {
                let v = f64::from(frame.sample(x + dx - 1, y + dy - 1, 0));
                gx += KX[dy][dx] * v;
                gy += KX[dx][dy] * v;
            }
        }
        gx.hypot(gy)
    }

    #[test]
    fn grayscale_examples() {
        let gray = Frame::gray(2, 1, vec![3, 200]).unwrap();
        assert_eq!(to_grayscale(&gray).unwrap(), gray);
        let white = Frame::filled(1, 1, &[255, 255, 255]).unwrap();
        assert_eq!(to_grayscale(&white).unwrap().pixels(), &[255]);
        // 0.299 * 255 = 76.245
        let red = Frame::filled(1, 1, &[255, 0, 0]).unwrap();
        assert_eq!(to_grayscale(&red).unwrap().pixels(), &[76]);
    }

    #[test]
    fn sobel_on_step_edge() {
        let map = sobel_magnitude(&step_frame()).unwrap();
        assert_eq!((map.width, map.height), (6, 6));
        for y in 0..6 {
            for x in 0..6 {
                let want = if x + 1 == 3 || x + 1 == 4 {
                    1020.0
                } else {
                    0.0
                };
                assert_eq!(map.get(x, y), want, "pixel ({}, {})", x + 1, y + 1);
            }
        }
        assert!((edge_density(&step_frame(), 32.0).unwrap() - 12.0 / 36.0).abs() < 1e-12);
    }

    #[test]
    fn sobel_matches_oracle_and_transposes() {
        let px: Vec<u8> = (0..7 * 5).map(|i| ((i * 37) % 251) as u8).collect();
        let frame = Frame::gray(7, 5, px).unwrap();
        let map = sobel_magnitude(&frame).unwrap();
        for y in 0..map.height {
            for x in 0..map.width {
                assert!((map.get(x, y) - oracle_magnitude(&frame, x + 1, y + 1)).abs() < 1e-9);
            }
        }
        assert_eq!(
            sobel_magnitude(&frame.transpose()).unwrap(),
            map.transpose()
        );
    }

    #[test]
    fn constant_frames_have_no_edges() {
        let frame = Frame::filled(9, 4, &[77]).unwrap();
        assert!(sobel_magnitude(&frame)
            .unwrap()
            .values
            .iter()
            .all(|&m| m == 0.0));
        assert_eq!(edge_density(&frame, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn block_checkerboard_is_all_edges() {
        // 2x2-pixel blocks. A 1-pixel checkerboard has zero Sobel response
        // because x-1 and x+1 always share a color.
        let px = (0..100)
            .map(|i: usize| {
                if ((i % 10) / 2 + (i / 10) / 2).is_multiple_of(2) {
                    255
                } else {
                    0
                }
            })
            .collect();
        let blocks = Frame::gray(10, 10, px).unwrap();
        let map = sobel_magnitude(&blocks).unwrap();
        for (i, &m) in map.values.iter().enumerate() {
            let (x, y) = (i % map.width + 1, i / map.width + 1);
            assert!((m - oracle_magnitude(&blocks, x, y)).abs() < 1e-9);
            assert!((m - 510.0 * 2f64.sqrt()).abs() < 1e-9);
        }
        assert_eq!(edge_density(&blocks, 32.0).unwrap(), 1.0);

        let px = (0..64)
            .map(|i: usize| {
                if (i % 8 + i / 8).is_multiple_of(2) {
                    255
                } else {
                    0
                }
            })
            .collect();
        assert_eq!(
            edge_density(&Frame::gray(8, 8, px).unwrap(), 0.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn too_small_frames_are_rejected() {
        let f = Frame::gray(2, 5, vec![0; 10]).unwrap();
        assert!(matches!(
            sobel_magnitude(&f),
            Err(Error::FrameTooSmall {
                width: 2,
                height: 5
            })
        ));
        assert!(matches!(
            is_frame_valid(&f, &EdgeFilterConfig::default()),
            Err(Error::FrameTooSmall { .. })
        ));
    }

    #[test]
    fn validity_examples() {
        let blank = Frame::filled(16, 16, &[120, 120, 120]).unwrap();
        assert!(!is_frame_valid(&blank, &EdgeFilterConfig::default()).unwrap());
        let cfg = EdgeFilterConfig {
            tau_mag: 32.0,
            tau_density: 0.01,
            enabled: true,
        };
        assert!(is_frame_valid(&step_frame(), &cfg).unwrap());
        assert!(is_frame_valid(&blank, &EdgeFilterConfig::disabled()).unwrap());
    }

    fn clip_with_invalid(blank: &Frame, textured: &Frame, invalid: usize) -> Vec<Frame> {
        (0..8)
            .map(|i| {
                if i < invalid {
                    blank.clone()
                } else {
                    textured.clone()
                }
            })
            .collect()
    }

    #[test]
    fn more_than_half_boundary_and_override() {
        let blank = Frame::filled(8, 8, &[0]).unwrap();
        let textured = step_frame();
        let cfg = EdgeFilterConfig::default();
        let five = clip_with_invalid(&blank, &textured, 5);
        let four = clip_with_invalid(&blank, &textured, 4);
        let clips = vec![
            CandidateClip {
                video_id: "v",
                clip: ClipIndex::new(0, 8),
                frames: five.iter().collect(),
            },
            CandidateClip {
                video_id: "v",
                clip: ClipIndex::new(8, 8),
                frames: four.iter().collect(),
            },
        ];
        let out = filter_clips(&clips, &cfg).unwrap();
        assert_eq!(out.retained, vec![1]);
        assert_eq!((out.audit[0].invalid, out.audit[0].removed), (5, true));
        assert_eq!((out.audit[1].invalid, out.audit[1].removed), (4, false));
        assert!(!out.audit.iter().any(|a| a.overridden));

        let six = clip_with_invalid(&blank, &textured, 6);
        let clips = vec![
            CandidateClip {
                video_id: "a",
                clip: ClipIndex::new(16, 8),
                frames: six.iter().collect(),
            },
            CandidateClip {
                video_id: "b",
                clip: ClipIndex::new(8, 8),
                frames: five.iter().collect(),
            },
            CandidateClip {
                video_id: "a",
                clip: ClipIndex::new(0, 8),
                frames: five.iter().collect(),
            },
        ];
        let out = filter_clips(&clips, &cfg).unwrap();
        // fewest invalid frames wins, then earliest start
        assert_eq!(out.retained, vec![2]);
        assert_eq!(out.audit.iter().filter(|a| a.overridden).count(), 1);
        assert!(out.audit[2].overridden && !out.audit[2].removed);
        let line = out.audit[2].to_json_line();
        assert_eq!(
            line,
            r#"{"video_id":"a","clip_start":0,"invalid":5,"L":8,"removed":false,"override":true}"#
        );
    }

    #[test]
    fn disabled_filter_keeps_everything() {
        let blank = Frame::filled(8, 8, &[0]).unwrap();
        let frames = vec![blank; 8];
        let clips = vec![CandidateClip {
            video_id: "v",
            clip: ClipIndex::new(0, 8),
            frames: frames.iter().collect(),
        }];
        let out = filter_clips(&clips, &EdgeFilterConfig::disabled()).unwrap();
        assert_eq!(out.retained, vec![0]);
        assert_eq!(out.audit[0].invalid, 0);
    }

    proptest! {
        #[test]
        fn filter_never_empties_a_class(counts in prop::collection::vec(0usize..=8, 1..12)) {
            let clips: Vec<_> = (0..counts.len()).map(|i| ("v", ClipIndex::new(i * 8, 8), 8)).collect();
            let out = decide_removals(&clips, &counts);
            prop_assert!(!out.retained.is_empty());
            for (i, a) in out.audit.iter().enumerate() {
                prop_assert_eq!(out.retained.contains(&i), !a.removed);
                if !a.overridden {
                    prop_assert_eq!(a.removed, counts[i] > 4);
                }
            }
        }

        #[test]
        fn density_is_monotone_and_shift_invariant(
            px in prop::collection::vec(0u8..=200, 36),
            tau_mag in 0.0f64..800.0,
            bump in 0.0f64..200.0,
            shift in 0u8..=55,
        ) {
            let frame = Frame::gray(6, 6, px.clone()).unwrap();
            let d = edge_density(&frame, tau_mag).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!(edge_density(&frame, tau_mag + bump).unwrap() <= d);
            let shifted = Frame::gray(6, 6, px.iter().map(|p| p + shift).collect()).unwrap();
            prop_assert_eq!(sobel_magnitude(&shifted).unwrap(), sobel_magnitude(&frame).unwrap());
        }
    }
}
