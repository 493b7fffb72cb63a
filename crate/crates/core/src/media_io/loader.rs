//! Parallel frame loading.
//!
//! Workers claim file indices from a shared counter in increasing order and
//! send `(index, result)` back over a channel; the caller slots results into
//! input order. When a read fails at index `i`, no worker claims an index
//! beyond `i`, and the reported error is the one with the smallest index. That
//! is exactly the error a sequential loop would have hit first.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::pnm::decode_pnm;
use super::Frame;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoaderConfig {
    pub num_threads: usize,
    /// Artificial wait added to every file read; zero disables it.
    #[serde(with = "millis")]
    pub injected_latency: Duration,
    /// Decode on the worker right after the read. When false, workers only
    /// read bytes and the calling thread decodes.
    pub decode_after_read: bool,
}

impl Default for LoaderConfig {
    fn default() -> Self {
        Self {
            num_threads: 4,
            injected_latency: Duration::ZERO,
            decode_after_read: true,
        }
    }
}

impl LoaderConfig {
    pub fn with_threads(num_threads: usize) -> Self {
        Self {
            num_threads,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_threads == 0 {
            return Err(Error::Config(
                "loader num_threads must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Duration::try_from_secs_f64(ms / 1000.0).map_err(serde::de::Error::custom)
    }
}

enum Loaded {
    Frame(Frame),
    Bytes(Vec<u8>),
}

fn read_one(path: &Path, cfg: &LoaderConfig) -> Result<Loaded> {
    if !cfg.injected_latency.is_zero() {
        thread::sleep(cfg.injected_latency);
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if cfg.decode_after_read {
        decode(path, &bytes).map(Loaded::Frame)
    } else {
        Ok(Loaded::Bytes(bytes))
    }
}

fn decode(path: &Path, bytes: &[u8]) -> Result<Frame> {
    decode_pnm(bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

fn finish(path: &Path, loaded: Loaded) -> Result<Frame> {
    match loaded {
        Loaded::Frame(f) => Ok(f),
        Loaded::Bytes(b) => decode(path, &b),
    }
}

/// Plain single-threaded reference loop.
pub fn load_frames_sequential(paths: &[PathBuf], cfg: &LoaderConfig) -> Result<Vec<Frame>> {
    paths
        .iter()
        .map(|p| read_one(p, cfg).and_then(|l| finish(p, l)))
        .collect()
}

/// Loads `paths` on `cfg.num_threads` workers; output order follows `paths`.
pub fn load_frames_parallel(paths: &[PathBuf], cfg: &LoaderConfig) -> Result<Vec<Frame>> {
    cfg.validate()?;
    let workers = cfg.num_threads.min(paths.len());
    if workers <= 1 {
        return load_frames_sequential(paths, cfg);
    }

    let next = AtomicUsize::new(0);
    let first_failure = AtomicUsize::new(usize::MAX);
    let mut slots: Vec<Option<Result<Loaded>>> = (0..paths.len()).map(|_| None).collect();

    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, first_failure) = (&next, &first_failure);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= paths.len() || i > first_failure.load(Ordering::Acquire) {
                    break;
                }
                let result = read_one(&paths[i], cfg);
                if result.is_err() {
                    first_failure.fetch_min(i, Ordering::AcqRel);
                }
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, result) in rx {
            slots[i] = Some(result);
        }
    });

    let mut frames = Vec::with_capacity(paths.len());
    for (path, slot) in paths.iter().zip(slots) {
        match slot {
            Some(result) => frames.push(finish(path, result?)?),
            None => unreachable!("every index before the first failure is loaded"),
        }
    }
    Ok(frames)
}
