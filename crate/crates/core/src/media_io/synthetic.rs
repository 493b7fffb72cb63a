//! Procedural stand-in for a teachable-object dataset.
//!
//! Every object is a striped square with its own base color and stripe
//! orientation. Clean videos show the object large and centered on a plain
//! background, drifting slightly from frame to frame; clutter videos show it
//! smaller with one to three of the user's other objects in the corners.
//! Clean videos may contain a contiguous run of blank (background-only)
//! frames; their indices go to a sidecar file.
//!
//! Generation is split into planning ([`plan_synthetic`]) and rendering
//! ([`write_dataset`]) so hand-built scenarios can reuse the renderer.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{write_pnm, DatasetManifest, Frame, ObjectEntry, UserEntry, VideoKind, VideoRecord};
use crate::clip_sampling::{uniform_sample_clips, ClipIndex, SamplerConfig};
use crate::rng::derived;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLANK_SIDECAR: &str = "blank_frames.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub objects_per_user: usize,
    /// Videos of each kind per object.
    pub videos_per_object: usize,
    pub frames_per_video: usize,
    pub frame_size: usize,
    /// Fraction of each clean video's frames rendered blank.
    pub blank_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_users: 4,
            objects_per_user: 3,
            videos_per_object: 2,
            frames_per_video: 32,
            frame_size: 32,
            blank_fraction: 0.25,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.num_users == 0 || self.videos_per_object == 0 || self.frames_per_video == 0 {
            return fail("user, video and frame counts must be at least 1");
        }
        if self.objects_per_user < 2 {
            return fail("objects_per_user must be at least 2");
        }
        if self.frame_size < 16 {
            return fail("frame_size must be at least 16");
        }
        if !(0.0..=1.0).contains(&self.blank_fraction) {
            return fail("blank_fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Blank frames per clean video.
    pub fn blank_count(&self) -> usize {
        (self.blank_fraction * self.frames_per_video as f64).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectStyle {
    pub color: [u8; 3],
    pub stripe_color: [u8; 3],
    /// Stripe normal direction in radians.
    pub stripe_angle: f64,
    /// Stripe period as a fraction of the frame size.
    pub stripe_period: f64,
}

impl ObjectStyle {
    pub fn from_hue(hue: f64, stripe_angle: f64, stripe_period: f64) -> Self {
        let color = hsv_to_rgb(hue, 0.8, 0.9);
        let stripe_color = color.map(|c| (f64::from(c) * 0.55).round() as u8);
        Self {
            color,
            stripe_color,
            stripe_angle,
            stripe_period,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corner {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

const CORNERS: [Corner; 4] = [
    Corner::TopLeft,
    Corner::TopRight,
    Corner::BottomLeft,
    Corner::BottomRight,
];

#[derive(Clone, Debug, PartialEq)]
pub struct VideoPlan {
    pub video_id: String,
    pub kind: VideoKind,
    pub num_frames: usize,
    pub background: [u8; 3],
    pub target: ObjectStyle,
    /// Target side length as a fraction of the frame size.
    pub target_scale: f64,
    pub distractors: Vec<(ObjectStyle, Corner)>,
    pub blank_frames: Vec<usize>,
    /// Flat color of blank frames; `None` shows the background.
    pub blank_fill: Option<[u8; 3]>,
    pub motion_phase: f64,
}

impl VideoPlan {
    /// Renders frame `t` as an RGB raster of `size`x`size` pixels.
    pub fn render(&self, t: usize, size: usize) -> Frame {
        if self.blank_frames.contains(&t) {
            return Canvas::new(size, self.blank_fill.unwrap_or(self.background)).into_frame();
        }
        let mut canvas = Canvas::new(size, self.background);
        let s = size as f64;
        let side = 0.3 * s;
        for (style, corner) in &self.distractors {
            let (cx, cy) = match corner {
                Corner::TopLeft => (0.17, 0.17),
                Corner::TopRight => (0.83, 0.17),
                Corner::BottomLeft => (0.17, 0.83),
                Corner::BottomRight => (0.83, 0.83),
            };
            canvas.draw_square(style, cx * s, cy * s, side);
        }
        let angle = 2.0 * PI * t as f64 / 16.0 + self.motion_phase;
        let cx = (0.5 + 0.06 * angle.sin()) * s;
        let cy = (0.5 + 0.06 * angle.cos()) * s;
        canvas.draw_square(&self.target, cx, cy, self.target_scale * s);
        canvas.into_frame()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectPlan {
    pub label: String,
    pub videos: Vec<VideoPlan>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserPlan {
    pub user_id: String,
    pub objects: Vec<ObjectPlan>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetPlan {
    pub frame_size: usize,
    pub users: Vec<UserPlan>,
}

impl DatasetPlan {
    /// Blank frame indices keyed by video id, only for videos that have any.
    pub fn blank_sidecar(&self) -> BTreeMap<String, Vec<usize>> {
        self.users
            .iter()
            .flat_map(|u| &u.objects)
            .flat_map(|o| &o.videos)
            .filter(|v| !v.blank_frames.is_empty())
            .map(|v| (v.video_id.clone(), v.blank_frames.clone()))
            .collect()
    }
}

/// Evenly spaced hues with a per-user offset, random stripe geometry.
fn user_styles(spec: &SyntheticSpec, user_id: &str) -> Vec<ObjectStyle> {
    let mut rng = derived(spec.seed, user_id);
    let hue_offset: f64 = rng.random();
    (0..spec.objects_per_user)
        .map(|k| {
            let hue = (k as f64 / spec.objects_per_user as f64 + hue_offset).fract();
            ObjectStyle::from_hue(hue, rng.random_range(0.0..PI), rng.random_range(0.18..0.3))
        })
        .collect()
}

fn clutter_distractors(
    styles: &[ObjectStyle],
    k: usize,
    rng: &mut impl Rng,
) -> Vec<(ObjectStyle, Corner)> {
    let others: Vec<usize> = (0..styles.len()).filter(|&j| j != k).collect();
    let count = rng.random_range(1..=3usize);
    let first_corner = rng.random_range(0..4usize);
    (0..count)
        .map(|d| {
            (
                styles[others[rng.random_range(0..others.len())]].clone(),
                CORNERS[(first_corner + d) % 4],
            )
        })
        .collect()
}

/// Lays out users, objects, styles and blank runs for `spec`.
pub fn plan_synthetic(spec: &SyntheticSpec) -> Result<DatasetPlan> {
    spec.validate()?;
    let mut users = Vec::with_capacity(spec.num_users);
    for u in 0..spec.num_users {
        let user_id = format!("user{u}");
        let styles = user_styles(spec, &user_id);

        let mut objects = Vec::with_capacity(spec.objects_per_user);
        for (k, style) in styles.iter().enumerate() {
            let label = format!("obj{k}");
            let mut videos = Vec::new();
            for kind in [VideoKind::Clean, VideoKind::Clutter] {
                for i in 0..spec.videos_per_object {
                    let tag = if kind == VideoKind::Clean {
                        "clean"
                    } else {
                        "clutter"
                    };
                    let video_id = format!("{user_id}_{label}_{tag}{i}");
                    let mut vrng = derived(spec.seed, &video_id);
                    let gray = vrng.random_range(96..=128u8);
                    let mut plan = VideoPlan {
                        video_id,
                        kind,
                        num_frames: spec.frames_per_video,
                        background: [gray; 3],
                        target: style.clone(),
                        target_scale: 0.7,
                        distractors: Vec::new(),
                        blank_frames: Vec::new(),
                        blank_fill: None,
                        motion_phase: vrng.random_range(0.0..2.0 * PI),
                    };
                    match kind {
                        VideoKind::Clean => {
                            let n = spec.blank_count();
                            let start = vrng.random_range(0..=spec.frames_per_video - n);
                            plan.blank_frames = (start..start + n).collect();
                        }
                        VideoKind::Clutter => {
                            plan.target_scale = 0.55;
                            plan.distractors = clutter_distractors(&styles, k, &mut vrng);
                        }
                    }
                    videos.push(plan);
                }
            }
            objects.push(ObjectPlan { label, videos });
        }
        users.push(UserPlan { user_id, objects });
    }
    Ok(DatasetPlan {
        frame_size: spec.frame_size,
        users,
    })
}

/// Frame count of the long clean video in [`plan_ablation_scenario`].
pub const ABLATION_LONG_FRAMES: usize = 64;
/// Frame count of the short clean video in [`plan_ablation_scenario`].
pub const ABLATION_SHORT_FRAMES: usize = 12;

/// A dataset on which each pipeline component has something to fix under
/// the default sampler settings (`L = 8`, `K = 4`, middle pick).
///
/// Every object gets a long clean video and a short clean video in which the
/// camera mostly shows the next object of the same user. The random sampler
/// draws `K` overlapping clips from the short video, the uniform sampler one.
/// The long clean video of each user's first object is blank exactly at the
/// frames of the first two uniform picks, so without the edge filter half of
/// its uniform clips are empty. Clutter videos follow [`plan_synthetic`],
/// with `spec.videos_per_object` of them per object and
/// `spec.frames_per_video` frames each. `spec.blank_fraction` is unused.
pub fn plan_ablation_scenario(spec: &SyntheticSpec) -> Result<DatasetPlan> {
    spec.validate()?;
    let sampler = SamplerConfig::default();
    let picks = uniform_sample_clips(ABLATION_LONG_FRAMES, &sampler)?;
    let blank: Vec<usize> = picks.iter().take(3).flat_map(ClipIndex::frames).collect();

    let mut users = Vec::with_capacity(spec.num_users);
    for u in 0..spec.num_users {
        let user_id = format!("user{u}");
        let styles = user_styles(spec, &user_id);
        let n = styles.len();
        let mut objects = Vec::with_capacity(n);
        for (k, style) in styles.iter().enumerate() {
            let label = format!("obj{k}");
            let mut videos = Vec::new();
            let video = |tag: String, kind: VideoKind, num_frames: usize| {
                let video_id = format!("{user_id}_{label}_{tag}");
                let mut vrng = derived(spec.seed, &video_id);
                let gray = vrng.random_range(96..=128u8);
                let phase = vrng.random_range(0.0..2.0 * PI);
                let plan = VideoPlan {
                    video_id,
                    kind,
                    num_frames,
                    background: [gray; 3],
                    target: style.clone(),
                    target_scale: 0.7,
                    distractors: Vec::new(),
                    blank_frames: Vec::new(),
                    blank_fill: None,
                    motion_phase: phase,
                };
                (plan, vrng)
            };

            let (mut long, _) = video("clean0".into(), VideoKind::Clean, ABLATION_LONG_FRAMES);
            if k == 0 {
                long.blank_frames = blank.clone();
                long.blank_fill = Some(styles[1].color);
            }
            let (mut short, _) = video("clean1".into(), VideoKind::Clean, ABLATION_SHORT_FRAMES);
            short.target = styles[(k + 1) % n].clone();
            short.target_scale = 0.45;
            short.distractors = vec![
                (style.clone(), Corner::BottomRight),
                (style.clone(), Corner::TopLeft),
            ];
            videos.push(long);
            videos.push(short);
            for i in 0..spec.videos_per_object {
                let (mut clutter, mut vrng) = video(
                    format!("clutter{i}"),
                    VideoKind::Clutter,
                    spec.frames_per_video,
                );
                clutter.target_scale = 0.55;
                clutter.distractors = clutter_distractors(&styles, k, &mut vrng);
                videos.push(clutter);
            }
            objects.push(ObjectPlan { label, videos });
        }
        users.push(UserPlan { user_id, objects });
    }
    Ok(DatasetPlan {
        frame_size: spec.frame_size,
        users,
    })
}

/// Renders `plan` under `out_dir`: frames as binary PPM, `manifest.json` and
/// the blank-frame sidecar.
pub fn write_dataset(plan: &DatasetPlan, out_dir: &Path) -> Result<DatasetManifest> {
    let mut users = Vec::with_capacity(plan.users.len());
    for user in &plan.users {
        let objects = user
            .objects
            .iter()
            .map(|o| ObjectEntry {
                label: o.label.clone(),
                videos: o
                    .videos
                    .iter()
                    .map(|v| VideoRecord {
                        video_id: v.video_id.clone(),
                        kind: v.kind,
                        frame_paths: (0..v.num_frames)
                            .map(|t| format!("frames/{}/{t:04}.ppm", v.video_id))
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        users.push(UserEntry {
            user_id: user.user_id.clone(),
            objects,
        });
    }
    let manifest = DatasetManifest::new(users, out_dir)?;

    let video_plans = plan
        .users
        .iter()
        .flat_map(|u| &u.objects)
        .flat_map(|o| &o.videos);
    for (video, record) in video_plans.zip(manifest.videos()) {
        let dir = out_dir.join("frames").join(&video.video_id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for t in 0..video.num_frames {
            write_pnm(
                &manifest.frame_path(record, t),
                &video.render(t, plan.frame_size),
            )?;
        }
    }
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    let sidecar = out_dir.join(BLANK_SIDECAR);
    crate::jsonio::write_pretty(&sidecar, &plan.blank_sidecar())?;
    Ok(manifest)
}

pub fn generate_synthetic_dataset(spec: &SyntheticSpec, out_dir: &Path) -> Result<DatasetManifest> {
    write_dataset(&plan_synthetic(spec)?, out_dir)
}

/// Reads a blank-frame sidecar.
pub fn load_blank_sidecar(path: &Path) -> Result<BTreeMap<String, Vec<usize>>> {
    crate::jsonio::read_json(path)
}

struct Canvas {
    size: usize,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(size: usize, background: [u8; 3]) -> Self {
        Self {
            size,
            pixels: background.repeat(size * size),
        }
    }

    /// Axis-aligned striped square centered at (`cx`, `cy`) with side `side`,
    /// all in pixels. Pixel centers inside the square are painted.
    fn draw_square(&mut self, style: &ObjectStyle, cx: f64, cy: f64, side: f64) {
        let half = side / 2.0;
        let period = style.stripe_period * self.size as f64;
        let (sin, cos) = style.stripe_angle.sin_cos();
        for y in 0..self.size {
            let py = y as f64 + 0.5;
            if (py - cy).abs() > half {
                continue;
            }
            for x in 0..self.size {
                let px = x as f64 + 0.5;
                if (px - cx).abs() > half {
                    continue;
                }
                let u = (px - cx) * cos + (py - cy) * sin;
                let color = if (u / period).floor() as i64 % 2 == 0 {
                    style.color
                } else {
                    style.stripe_color
                };
                let i = (y * self.size + x) * 3;
                self.pixels[i..i + 3].copy_from_slice(&color);
            }
        }
    }

    fn into_frame(self) -> Frame {
        Frame::new(self.size, self.size, 3, self.pixels).expect("canvas dimensions are consistent")
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|ch| ((ch + m) * 255.0).round() as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            num_users: 2,
            objects_per_user: 2,
            videos_per_object: 1,
            frames_per_video: 16,
            frame_size: 16,
            ..Default::default()
        }
    }

    #[test]
    fn blank_run_has_exact_length() {
        let spec = small_spec();
        let plan = plan_synthetic(&spec).unwrap();
        let sidecar = plan.blank_sidecar();
        assert_eq!(sidecar.len(), 4);
        for (id, frames) in &sidecar {
            assert!(id.contains("clean"));
            assert_eq!(frames.len(), 4);
            assert!(frames.windows(2).all(|w| w[1] == w[0] + 1));
        }
    }

    #[test]
    fn blank_frames_are_uniform_and_others_are_not() {
        let plan = plan_synthetic(&small_spec()).unwrap();
        let video = &plan.users[0].objects[0].videos[0];
        for t in 0..video.num_frames {
            let frame = video.render(t, 16);
            let uniform = frame.pixels().chunks(3).all(|p| p == video.background);
            assert_eq!(uniform, video.blank_frames.contains(&t), "frame {t}");
        }
    }

    #[test]
    fn clutter_videos_have_distractors_from_same_user() {
        let plan = plan_synthetic(&SyntheticSpec::default()).unwrap();
        for user in &plan.users {
            let colors: Vec<_> = user
                .objects
                .iter()
                .map(|o| o.videos[0].target.color)
                .collect();
            for object in &user.objects {
                for v in object
                    .videos
                    .iter()
                    .filter(|v| v.kind == VideoKind::Clutter)
                {
                    assert!((1..=3).contains(&v.distractors.len()));
                    assert!(v.blank_frames.is_empty());
                    for (d, _) in &v.distractors {
                        assert!(colors.contains(&d.color));
                        assert_ne!(d.color, v.target.color);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = [
            SyntheticSpec {
                objects_per_user: 1,
                ..Default::default()
            },
            SyntheticSpec {
                frame_size: 15,
                ..Default::default()
            },
            SyntheticSpec {
                frames_per_video: 0,
                ..Default::default()
            },
            SyntheticSpec {
                blank_fraction: 1.5,
                ..Default::default()
            },
        ];
        for spec in bad {
            assert!(
                matches!(plan_synthetic(&spec), Err(Error::Config(_))),
                "{spec:?}"
            );
        }
    }

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), [255, 0, 0]);
        assert_eq!(hsv_to_rgb(1.0 / 3.0, 1.0, 1.0), [0, 255, 0]);
        assert_eq!(hsv_to_rgb(2.0 / 3.0, 1.0, 1.0), [0, 0, 255]);
    }
}
