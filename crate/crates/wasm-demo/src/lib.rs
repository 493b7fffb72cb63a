//! Browser bindings for three pieces of the pipeline: clip sampling, Sobel
//! edge density and prototype adaptation. The plain functions carry the logic
//! and are tested natively; the `#[wasm_bindgen]` wrappers only convert
//! errors.

use protopipe::adaptation::{adapt_prototypes, TransformerWeights};
use protopipe::clip_sampling::{
    causal_sliding_window, sample_clips, SamplerConfig, SamplingPolicy, WithinChunk,
};
use protopipe::frame_validity::{sobel_magnitude, to_grayscale, MAX_SOBEL_MAGNITUDE};
use protopipe::media_io::Frame;
use protopipe::numerics::{cosine_similarity, Matrix};
use wasm_bindgen::prelude::*;

fn policy(name: &str) -> Result<(SamplingPolicy, WithinChunk), String> {
    match name {
        "uniform-first" => Ok((SamplingPolicy::Uniform, WithinChunk::First)),
        "uniform-middle" => Ok((SamplingPolicy::Uniform, WithinChunk::Middle)),
        "uniform-random" => Ok((SamplingPolicy::Uniform, WithinChunk::SeededRandom)),
        "random" => Ok((SamplingPolicy::Random, WithinChunk::Middle)),
        other => Err(format!("unknown sampler {other:?}")),
    }
}

/// Start frames of the sampled support clips.
pub fn clip_starts(
    num_frames: usize,
    clip_length: usize,
    clips_per_video: usize,
    sampler: &str,
    seed: u64,
) -> Result<Vec<u32>, String> {
    let (policy, within_chunk) = policy(sampler)?;
    let cfg = SamplerConfig {
        clip_length,
        clips_per_video,
        policy,
        within_chunk,
        seed,
        ..Default::default()
    };
    cfg.validate().map_err(|e| e.to_string())?;
    let clips = sample_clips(num_frames, &cfg).map_err(|e| e.to_string())?;
    Ok(clips.iter().map(|c| c.start as u32).collect())
}

/// Frame indices of the causal query clip that ends at frame `t`.
pub fn query_window(num_frames: usize, clip_length: usize, t: usize) -> Result<Vec<u32>, String> {
    if clip_length == 0 || t >= num_frames {
        return Err(format!("need clip_length >= 1 and t < {num_frames}"));
    }
    let windows = causal_sliding_window(t + 1, clip_length);
    Ok(windows[t].iter().map(|&i| i as u32).collect())
}

/// Sobel result for an RGBA canvas image.
#[wasm_bindgen]
pub struct EdgeMap {
    density: f64,
    rgba: Vec<u8>,
}

#[wasm_bindgen]
impl EdgeMap {
    /// Fraction of interior pixels above the threshold.
    #[wasm_bindgen(getter)]
    pub fn density(&self) -> f64 {
        self.density
    }

    /// RGBA image of the same size: edges white, other pixels shaded by
    /// magnitude, the one-pixel border black.
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }
}

pub fn edge_map_of(
    width: usize,
    height: usize,
    rgba: &[u8],
    tau_mag: f64,
) -> Result<EdgeMap, String> {
    if rgba.len() != width * height * 4 {
        return Err(format!(
            "expected {} RGBA bytes, got {}",
            width * height * 4,
            rgba.len()
        ));
    }
    let rgb: Vec<u8> = rgba
        .chunks_exact(4)
        .flat_map(|p| [p[0], p[1], p[2]])
        .collect();
    let frame = Frame::new(width, height, 3, rgb).map_err(|e| e.to_string())?;
    let gray = to_grayscale(&frame).map_err(|e| e.to_string())?;
    let map = sobel_magnitude(&gray).map_err(|e| e.to_string())?;
    let mut out = vec![0u8; width * height * 4];
    let mut edges = 0;
    for y in 0..map.height {
        for x in 0..map.width {
            let m = map.get(x, y);
            let shade = if m > tau_mag {
                edges += 1;
                255
            } else {
                (m / MAX_SOBEL_MAGNITUDE * 120.0) as u8
            };
            let i = ((y + 1) * width + x + 1) * 4;
            out[i..i + 3].fill(shade);
        }
    }
    for px in out.chunks_exact_mut(4) {
        px[3] = 255;
    }
    Ok(EdgeMap {
        density: edges as f64 / map.values.len() as f64,
        rgba: out,
    })
}

/// Pairwise cosine similarities of `n` prototypes of dimension `d` before
/// and after the mean-repulsion adapter, as two row-major `n x n` blocks.
pub fn repulsion_cosines(
    values: &[f64],
    n: usize,
    d: usize,
    alpha: f64,
) -> Result<Vec<f64>, String> {
    if n < 2 || d < 2 || values.len() != n * d {
        return Err(format!(
            "need at least 2 prototypes of dimension >= 2 and {} values",
            n * d
        ));
    }
    let p = Matrix::new(n, d, values.to_vec()).map_err(|e| e.to_string())?;
    let w = TransformerWeights::mean_repulsion(d, alpha).map_err(|e| e.to_string())?;
    let adapted = adapt_prototypes(&p, &w).map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(2 * n * n);
    for m in [&p, &adapted] {
        for i in 0..n {
            for j in 0..n {
                out.push(cosine_similarity(m.row(i), m.row(j)).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

#[wasm_bindgen(js_name = clipStarts)]
pub fn clip_starts_js(
    num_frames: usize,
    clip_length: usize,
    clips_per_video: usize,
    sampler: &str,
    seed: u64,
) -> Result<Vec<u32>, JsError> {
    clip_starts(num_frames, clip_length, clips_per_video, sampler, seed)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = queryWindow)]
pub fn query_window_js(
    num_frames: usize,
    clip_length: usize,
    t: usize,
) -> Result<Vec<u32>, JsError> {
    query_window(num_frames, clip_length, t).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = edgeMap)]
pub fn edge_map_js(
    width: usize,
    height: usize,
    rgba: &[u8],
    tau_mag: f64,
) -> Result<EdgeMap, JsError> {
    edge_map_of(width, height, rgba, tau_mag).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = repulsionCosines)]
pub fn repulsion_cosines_js(
    values: &[f64],
    n: usize,
    d: usize,
    alpha: f64,
) -> Result<Vec<f64>, JsError> {
    repulsion_cosines(values, n, d, alpha).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forty_frame_example() {
        assert_eq!(clip_starts(40, 8, 2, "uniform-first", 0).unwrap(), [0, 16]);
        assert_eq!(clip_starts(40, 8, 2, "uniform-middle", 0).unwrap(), [8, 24]);
        assert!(clip_starts(4, 8, 2, "uniform-first", 0).is_err());
        assert!(clip_starts(40, 8, 2, "sideways", 0).is_err());
    }

    #[test]
    fn random_sampler_is_seeded() {
        let a = clip_starts(100, 8, 4, "random", 3).unwrap();
        assert_eq!(a, clip_starts(100, 8, 4, "random", 3).unwrap());
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert!(a.iter().all(|&s| s <= 92));
    }

    #[test]
    fn window_pads_with_first_frame() {
        assert_eq!(query_window(3, 2, 0).unwrap(), [0, 0]);
        assert_eq!(query_window(3, 2, 2).unwrap(), [1, 2]);
        assert!(query_window(3, 2, 3).is_err());
    }

    #[test]
    fn step_image_density() {
        let mut rgba = Vec::new();
        for i in 0..64 {
            let v = if i % 8 >= 4 { 255 } else { 0 };
            rgba.extend_from_slice(&[v, v, v, 255]);
        }
        let map = edge_map_of(8, 8, &rgba, 32.0).unwrap();
        assert!((map.density() - 1.0 / 3.0).abs() < 1e-12);
        let lit = map.rgba().chunks_exact(4).filter(|p| p[0] == 255).count();
        assert_eq!(lit, 12);
        assert!(edge_map_of(8, 8, &rgba[..10], 32.0).is_err());
    }

    #[test]
    fn repulsion_lowers_similarity() {
        let p = [1.0, 0.2, 0.1, 0.9, 0.3, 0.0, 0.8, 0.1, 0.4];
        let cos = repulsion_cosines(&p, 3, 3, 0.9).unwrap();
        let (before, after) = cos.split_at(9);
        for i in 0..3 {
            assert!((before[i * 3 + i] - 1.0).abs() < 1e-12);
            for j in 0..3 {
                if i != j {
                    assert!(after[i * 3 + j] < before[i * 3 + j]);
                }
            }
        }
    }
}
