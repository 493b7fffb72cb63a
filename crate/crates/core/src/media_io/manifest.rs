use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonio::parse_json;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VideoKind {
    /// Object in isolation; support candidate.
    Clean,
    /// Object among distractors; query candidate.
    Clutter,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub video_id: String,
    pub kind: VideoKind,
    /// Frame files in temporal order, relative to the manifest directory.
    #[serde(rename = "frames")]
    pub frame_paths: Vec<String>,
}

impl VideoRecord {
    pub fn num_frames(&self) -> usize {
        self.frame_paths.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectEntry {
    pub label: String,
    pub videos: Vec<VideoRecord>,
}

impl ObjectEntry {
    pub fn videos_of(&self, kind: VideoKind) -> impl Iterator<Item = &VideoRecord> {
        self.videos.iter().filter(move |v| v.kind == kind)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserEntry {
    pub user_id: String,
    pub objects: Vec<ObjectEntry>,
}

/// Users → objects → clean/clutter videos → frame files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub users: Vec<UserEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl DatasetManifest {
    pub fn new(users: Vec<UserEntry>, root: impl Into<PathBuf>) -> Result<Self> {
        let manifest = Self {
            users,
            root: root.into(),
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Directory that frame paths are relative to.
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn user(&self, user_id: &str) -> Result<&UserEntry> {
        self.users
            .iter()
            .find(|u| u.user_id == user_id)
            .ok_or_else(|| Error::UnknownUser(user_id.to_string()))
    }

    /// The video with `video_id` together with its user and object.
    pub fn find_video(&self, video_id: &str) -> Result<(&UserEntry, &ObjectEntry, &VideoRecord)> {
        for user in &self.users {
            for object in &user.objects {
                if let Some(video) = object.videos.iter().find(|v| v.video_id == video_id) {
                    return Ok((user, object, video));
                }
            }
        }
        Err(Error::UnknownVideo(video_id.to_string()))
    }

    pub fn frame_path(&self, video: &VideoRecord, index: usize) -> PathBuf {
        self.root.join(&video.frame_paths[index])
    }

    pub fn frame_paths(&self, video: &VideoRecord) -> Vec<PathBuf> {
        video
            .frame_paths
            .iter()
            .map(|p| self.root.join(p))
            .collect()
    }

    pub fn videos(&self) -> impl Iterator<Item = &VideoRecord> {
        self.users
            .iter()
            .flat_map(|u| u.objects.iter().flat_map(|o| o.videos.iter()))
    }

    pub fn total_frames(&self) -> usize {
        self.videos().map(VideoRecord::num_frames).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut user_ids = HashSet::new();
        let mut video_ids = HashSet::new();
        for user in &self.users {
            if !user_ids.insert(user.user_id.as_str()) {
                return Err(Error::InvariantViolation(format!(
                    "duplicate user_id {:?}",
                    user.user_id
                )));
            }
            if user.objects.len() < 2 {
                return Err(Error::InvariantViolation(format!(
                    "user {:?} has {} object(s); an episode needs at least 2",
                    user.user_id,
                    user.objects.len()
                )));
            }
            let mut labels = HashSet::new();
            for object in &user.objects {
                if !labels.insert(object.label.as_str()) {
                    return Err(Error::InvariantViolation(format!(
                        "duplicate label {:?} for user {:?}",
                        object.label, user.user_id
                    )));
                }
                for kind in [VideoKind::Clean, VideoKind::Clutter] {
                    if object.videos_of(kind).next().is_none() {
                        return Err(Error::InvariantViolation(format!(
                            "object {:?} of user {:?} has no {kind:?} video",
                            object.label, user.user_id
                        )));
                    }
                }
                for video in &object.videos {
                    if !video_ids.insert(video.video_id.as_str()) {
                        return Err(Error::InvariantViolation(format!(
                            "duplicate video_id {:?}",
                            video.video_id
                        )));
                    }
                    if video.frame_paths.is_empty() {
                        return Err(Error::InvariantViolation(format!(
                            "video {:?} has no frames",
                            video.video_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::jsonio::write_pretty(path, self)
    }
}

/// Reads and validates a manifest; frame paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: DatasetManifest = parse_json(path, &text)?;
    manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate()?;
    Ok(manifest)
}
