use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::mazeenv::{AgentAction, EnvError, NavEnv, Observation, Pose, OBS_LEN};

pub const NVFD_MAGIC: &[u8; 4] = b"NVFD";
pub const NVFD_VERSION: u32 = 1;

/// Frame memory with a fixed capacity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameDataset {
    capacity: usize,
    frames: Vec<Observation>,
    /// Camera pose of each frame when known (not persisted).
    poses: Vec<Pose>,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("not a frame dataset (bad magic)")]
    BadMagic,
    #[error("unsupported dataset version {0}")]
    Version(u32),
    #[error("dataset is truncated")]
    Truncated,
    #[error("dataset is full")]
    Full,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl FrameDataset {
    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            capacity,
            frames: Vec::with_capacity(capacity.min(1 << 16)),
            poses: Vec::new(),
        }
    }

    pub fn from_frames(frames: Vec<Observation>) -> Self {
        Self {
            capacity: frames.len(),
            frames,
            poses: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() >= self.capacity
    }

    pub fn frames(&self) -> &[Observation] {
        &self.frames
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn push(&mut self, frame: Observation, pose: Option<Pose>) -> Result<(), DatasetError> {
        if self.is_full() {
            return Err(DatasetError::Full);
        }
        self.frames.push(frame);
        if let Some(p) = pose {
            if self.poses.len() + 1 == self.frames.len() {
                self.poses.push(p);
            }
        }
        Ok(())
    }

    /// Splits off the last `n` frames (e.g. a held-out set).
    pub fn split_tail(mut self, n: usize) -> (Self, Self) {
        let keep = self.frames.len().saturating_sub(n);
        let tail = self.frames.split_off(keep);
        let tail_poses = if self.poses.len() > keep {
            self.poses.split_off(keep)
        } else {
            Vec::new()
        };
        self.capacity = self.frames.len();
        (
            self,
            Self {
                capacity: tail.len(),
                frames: tail,
                poses: tail_poses,
            },
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(NVFD_MAGIC)?;
        w.write_all(&NVFD_VERSION.to_le_bytes())?;
        w.write_all(&(self.frames.len() as u32).to_le_bytes())?;
        for f in &self.frames {
            w.write_all(f.as_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, DatasetError> {
        let mut head = [0u8; 12];
        r.read_exact(&mut head).map_err(truncated)?;
        if &head[..4] != NVFD_MAGIC {
            return Err(DatasetError::BadMagic);
        }
        let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
        if version != NVFD_VERSION {
            return Err(DatasetError::Version(version));
        }
        let count = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
        let mut frames = Vec::with_capacity(count);
        for _ in 0..count {
            let mut buf = vec![0u8; OBS_LEN];
            r.read_exact(&mut buf).map_err(truncated)?;
            frames.push(Observation::from_bytes(buf).expect("length checked"));
        }
        Ok(Self::from_frames(frames))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        self.write_to(BufWriter::new(File::create(path)?))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn truncated(e: io::Error) -> DatasetError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        DatasetError::Truncated
    } else {
        DatasetError::Io(e)
    }
}

/// Fills a dataset of `t` frames by driving the robot with uniformly random
/// commands from random collision-free spawn points until each episode ends.
pub fn collect_frames<R: Rng + ?Sized>(
    env: &mut NavEnv,
    t: usize,
    rng: &mut R,
) -> Result<FrameDataset, EnvError> {
    let mut data = FrameDataset::with_capacity(t);
    let (v_max, w_max) = (env.config().v_max, env.config().w_max);
    while !data.is_full() {
        let mut step = env.reset_anywhere()?;
        loop {
            if data.push(step.observation, Some(step.pose)).is_err() || data.is_full() {
                break;
            }
            if step.outcome.is_terminal() {
                break;
            }
            let action = AgentAction::new(
                rng.random_range(0.0..=v_max),
                rng.random_range(-w_max..=w_max),
            );
            step = env.step(action)?;
        }
    }
    Ok(data)
}
