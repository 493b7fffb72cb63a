use std::collections::BTreeSet;
use std::path::Path;

use protopipe::clip_sampling::{sample_clips, SamplerConfig};
use protopipe::commands::{gen_synthetic, scenario_config, Scenario};
use protopipe::config::PipelineConfig;
use protopipe::embedding::{embed_clip, Embedder, PatchProjection};
use protopipe::media_io::synthetic::load_blank_sidecar;
use protopipe::media_io::{read_pnm, DatasetManifest, SyntheticSpec, BLANK_SIDECAR};
use protopipe::numerics::cosine_similarity;
use protopipe::pipeline::{evaluate, personalize, recognize_video, Arm, PipelineContext};
use protopipe::protonet::{classify_clip, Episode};
use protopipe::rng::derive_seed;

fn dataset(dir: &Path, spec: &SyntheticSpec) -> DatasetManifest {
    gen_synthetic(dir, spec, Scenario::Standard).unwrap()
}

fn small_spec(blank_fraction: f64) -> SyntheticSpec {
    SyntheticSpec {
        num_users: 2,
        objects_per_user: 3,
        blank_fraction,
        ..Default::default()
    }
}

fn projection(cfg: &PipelineConfig) -> PatchProjection {
    match cfg.embedder.build().unwrap() {
        Embedder::PatchProjection(p) => p,
        Embedder::Precomputed(_) => unreachable!(),
    }
}

fn mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len() as f64;
    (0..vectors[0].len())
        .map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n)
        .collect()
}

#[test]
fn personalize_twice_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), &small_spec(0.25));
    let episode = Episode::from_manifest(&manifest, &manifest.users[0].user_id).unwrap();
    let ctx = PipelineContext::new(&manifest, PipelineConfig::default()).unwrap();
    let a = personalize(&ctx, &episode).unwrap();
    let b = personalize(&ctx, &episode).unwrap();
    assert_eq!(a, b);

    let single = PipelineConfig {
        loader: protopipe::config::LoaderSettings { num_threads: 1 },
        ..Default::default()
    };
    let ctx1 = PipelineContext::new(&manifest, single).unwrap();
    let c = personalize(&ctx1, &episode).unwrap();
    assert_eq!(a.prototypes.raw, c.prototypes.raw);
    assert_eq!(a.audit, c.audit);
}

#[test]
fn raw_prototypes_match_independent_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), &small_spec(0.0));
    let cfg = PipelineConfig {
        edge_filter: protopipe::frame_validity::EdgeFilterConfig::disabled(),
        ..Default::default()
    };
    let proj = projection(&cfg);
    for user in &manifest.users {
        let episode = Episode::from_manifest(&manifest, &user.user_id).unwrap();
        let ctx = PipelineContext::new(&manifest, cfg.clone()).unwrap();
        let protos = personalize(&ctx, &episode).unwrap().prototypes;

        let mut clip_vectors: Vec<Vec<Vec<f64>>> = Vec::new();
        for class in &episode.support {
            let mut per_class = Vec::new();
            for video in &class.videos {
                let sampler = SamplerConfig {
                    seed: derive_seed(cfg.seed, &video.video_id),
                    ..cfg.sampler.clone()
                };
                for clip in sample_clips(video.num_frames(), &sampler).unwrap() {
                    let frames: Vec<_> = clip
                        .frames()
                        .map(|i| read_pnm(&manifest.frame_path(video, i)).unwrap())
                        .collect();
                    per_class.push(embed_clip(&frames, &proj).unwrap().into_inner());
                }
            }
            clip_vectors.push(per_class);
        }
        for (k, clips) in clip_vectors.iter().enumerate() {
            let expected = mean(clips);
            for (a, b) in protos.raw.row(k).iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }

        // every support clip sits closer to its own prototype than to any other
        for (k, clips) in clip_vectors.iter().enumerate() {
            for v in clips {
                let sims: Vec<f64> = (0..protos.num_classes())
                    .map(|j| cosine_similarity(v, protos.raw.row(j)).unwrap())
                    .collect();
                let best = (0..sims.len())
                    .max_by(|&a, &b| sims[a].total_cmp(&sims[b]))
                    .unwrap();
                assert_eq!(best, k, "user {} class {k}: {sims:?}", user.user_id);
            }
        }
    }
}

#[test]
fn audit_agrees_with_blank_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), &small_spec(0.75));
    let blanks = load_blank_sidecar(&dir.path().join(BLANK_SIDECAR)).unwrap();
    let cfg = PipelineConfig::default();
    let l = cfg.sampler.clip_length;
    let mut removed = 0;
    for user in &manifest.users {
        let episode = Episode::from_manifest(&manifest, &user.user_id).unwrap();
        let ctx = PipelineContext::new(&manifest, cfg.clone()).unwrap();
        let result = personalize(&ctx, &episode).unwrap();
        assert_eq!(result.prototypes.num_classes(), 3);
        for entry in &result.audit {
            let run: BTreeSet<usize> = blanks
                .get(&entry.video_id)
                .cloned()
                .unwrap_or_default()
                .into_iter()
                .collect();
            let expected_invalid = (entry.clip_start..entry.clip_start + l)
                .filter(|f| run.contains(f))
                .count();
            assert_eq!(entry.invalid, expected_invalid, "{entry:?}");
            assert_eq!(entry.clip_length, l);
            if !entry.overridden {
                assert_eq!(entry.removed, 2 * expected_invalid > l, "{entry:?}");
            }
            removed += usize::from(entry.removed);
        }
    }
    assert!(removed > 0, "a 75% blank dataset must lose clips");
}

#[test]
fn recognition_follows_the_causal_window() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), &small_spec(0.25));
    let cfg = PipelineConfig::default();
    let proj = projection(&cfg);
    let l = cfg.sampler.clip_length;
    let user = &manifest.users[0];
    let episode = Episode::from_manifest(&manifest, &user.user_id).unwrap();
    let ctx = PipelineContext::new(&manifest, cfg.clone()).unwrap();
    let protos = personalize(&ctx, &episode).unwrap().prototypes;

    let query = &episode.query[0];
    let predictions = recognize_video(&ctx, query.video, &protos).unwrap();
    assert_eq!(predictions.per_frame.len(), query.video.num_frames());
    assert_eq!(predictions.labels, protos.labels);

    let frame_vecs: Vec<Vec<f64>> = (0..query.video.num_frames())
        .map(|i| {
            proj.embed_frame(&read_pnm(&manifest.frame_path(query.video, i)).unwrap())
                .unwrap()
                .into_inner()
        })
        .collect();
    for (t, got) in predictions.per_frame.iter().enumerate() {
        let window: Vec<Vec<f64>> = (0..l)
            .map(|j| frame_vecs[(t + j + 1).saturating_sub(l).min(t)].clone())
            .collect();
        let q = mean(&window);
        let (k, scores) = classify_clip(&q, &protos, true).unwrap();
        assert_eq!(got.pred, protos.labels[k]);
        for (a, b) in got.scores.iter().zip(&scores) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn single_frame_video_gets_one_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), &small_spec(0.25));
    let cfg = PipelineConfig::default();
    let proj = projection(&cfg);
    let episode = Episode::from_manifest(&manifest, &manifest.users[0].user_id).unwrap();
    let ctx = PipelineContext::new(&manifest, cfg).unwrap();
    let protos = personalize(&ctx, &episode).unwrap().prototypes;

    let mut video = episode.query[0].video.clone();
    video.frame_paths.truncate(1);
    let predictions = recognize_video(&ctx, &video, &protos).unwrap();
    assert_eq!(predictions.per_frame.len(), 1);
    let q = proj
        .embed_frame(&read_pnm(&manifest.frame_path(&video, 0)).unwrap())
        .unwrap();
    let (k, _) = classify_clip(&q, &protos, true).unwrap();
    assert_eq!(predictions.per_frame[0].pred, protos.labels[k]);
}

#[test]
fn ablation_ordering_holds_across_seeds() {
    for seed in [3, 7, 11] {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            seed,
            ..Default::default()
        };
        let manifest = gen_synthetic(dir.path(), &spec, Scenario::Ablation).unwrap();
        let report = evaluate(&manifest, &scenario_config(), &Arm::ALL).unwrap();
        let acc = |arm| report.arm(arm).unwrap().aggregate;
        assert!(
            acc(Arm::Baseline) <= acc(Arm::Uniform),
            "seed {seed}\n{}",
            report.table()
        );
        assert!(
            acc(Arm::Uniform) <= acc(Arm::Filter),
            "seed {seed}\n{}",
            report.table()
        );
    }
}
