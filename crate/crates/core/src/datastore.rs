//! Recordings, datasets, the JSONL on-disk format and split strategies.
//!
//! One recording per line:
//!
//! ```text
//! {"format":"airscript-rec/1","participant":"P01","label":7,"rate_hz":50.0,
//!  "samples":[{"t":0.0,"a":[ax,ay,az],"g":[gx,gy,gz],"q":[w,x,y,z]}, ...],
//!  "emg":[[e0,...,e7], ...]}
//! ```
//!
//! `a` is acceleration in g-units, `g` angular velocity in degrees per second
//! in the device frame, `q` the device orientation, scalar first. After
//! rotation into the world frame, gyro channel 0 drives horizontal pen motion
//! and channel 1 vertical pen motion (positive is up); channel 2 is roll and is
//! ignored. `emg` is optional and never consumed.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quatmath::{self, Quaternion, Vec3};
use crate::NUM_CLASSES;

pub const RECORDING_FORMAT: &str = "airscript-rec/1";
pub const DEFAULT_RATE_HZ: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub accel: Vec3,
    pub gyro: Vec3,
    pub quat: Quaternion,
}

impl ImuSample {
    /// The 10-channel vector `[a, g, q]`.
    pub fn channels(&self) -> [f64; 10] {
        let a = self.accel;
        let g = self.gyro;
        let q = self.quat;
        [a.x, a.y, a.z, g.x, g.y, g.z, q.w, q.x, q.y, q.z]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub participant_id: String,
    pub label: u8,
    pub sample_rate: f64,
    pub samples: Vec<ImuSample>,
    pub emg: Option<Vec<[i32; 8]>>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Err(Error::domain(format!(
                "recording has {} samples, at least 2 required",
                self.samples.len()
            )));
        }
        if usize::from(self.label) >= NUM_CLASSES {
            return Err(Error::domain(format!("label {} out of range", self.label)));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::domain("sample rate must be positive"));
        }
        let mut prev = f64::NEG_INFINITY;
        for s in &self.samples {
            if !(s.t.is_finite()
                && s.accel.is_finite()
                && s.gyro.is_finite()
                && s.quat.is_finite())
            {
                return Err(Error::domain("non-finite sample value"));
            }
            if s.t < prev {
                return Err(Error::domain("timestamps decrease"));
            }
            prev = s.t;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub recordings: Vec<Recording>,
}

impl Dataset {
    pub fn new(recordings: Vec<Recording>) -> Self {
        Dataset { recordings }
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.recordings.iter().map(|r| r.label).collect()
    }

    /// Distinct participant ids, sorted.
    pub fn participants(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .recordings
            .iter()
            .map(|r| r.participant_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn indices_of_participant(&self, participant: &str) -> Vec<usize> {
        self.recordings
            .iter()
            .enumerate()
            .filter(|(_, r)| r.participant_id == participant)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset::new(indices.iter().map(|&i| self.recordings[i].clone()).collect())
    }
}

#[derive(Serialize, Deserialize)]
struct SampleLine {
    t: f64,
    a: [f64; 3],
    g: [f64; 3],
    q: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct RecordingLine {
    format: String,
    participant: String,
    label: u8,
    rate_hz: f64,
    samples: Vec<SampleLine>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emg: Option<Vec<[i32; 8]>>,
}

impl From<&Recording> for RecordingLine {
    fn from(r: &Recording) -> Self {
        RecordingLine {
            format: RECORDING_FORMAT.to_string(),
            participant: r.participant_id.clone(),
            label: r.label,
            rate_hz: r.sample_rate,
            samples: r
                .samples
                .iter()
                .map(|s| SampleLine {
                    t: s.t,
                    a: s.accel.to_array(),
                    g: s.gyro.to_array(),
                    q: s.quat.to_array(),
                })
                .collect(),
            emg: r.emg.clone(),
        }
    }
}

fn recording_from_line(line: RecordingLine) -> Result<Recording> {
    if line.format != RECORDING_FORMAT {
        return Err(Error::UnknownFormat(line.format));
    }
    let mut samples = Vec::with_capacity(line.samples.len());
    for s in line.samples {
        let mut quat = Quaternion::from_array(s.q);
        let n = quat.norm();
        if (n - 1.0).abs() > quatmath::UNIT_TOLERANCE {
            return Err(Error::domain(format!("quaternion norm {n} is not unit")));
        }
        // Only repair visible drift so that stored unit quaternions load bit-exact.
        if (n - 1.0).abs() > 1e-9 {
            quat = quatmath::normalize(quat)?;
        }
        samples.push(ImuSample {
            t: s.t,
            accel: Vec3::from_array(s.a),
            gyro: Vec3::from_array(s.g),
            quat,
        });
    }
    let rec = Recording {
        participant_id: line.participant,
        label: line.label,
        sample_rate: line.rate_hz,
        samples,
        emg: line.emg,
    };
    rec.validate()?;
    Ok(rec)
}

/// Serializes one recording as a single JSON line (no trailing newline).
pub fn recording_to_json(rec: &Recording) -> Result<String> {
    Ok(serde_json::to_string(&RecordingLine::from(rec))?)
}

pub fn recording_from_json(text: &str) -> Result<Recording> {
    let line: RecordingLine = serde_json::from_str(text)?;
    recording_from_line(line)
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, mut out: W) -> Result<()> {
    for rec in &dataset.recordings {
        rec.validate()?;
        serde_json::to_writer(&mut out, &RecordingLine::from(rec))?;
        out.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

pub fn save_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_jsonl(dataset, &mut out)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut recordings = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let format_err = |msg: String| Error::Format {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let parsed: RecordingLine =
            serde_json::from_str(&line).map_err(|e| format_err(e.to_string()))?;
        let rec = recording_from_line(parsed).map_err(|e| match e {
            Error::UnknownFormat(v) => Error::UnknownFormat(v),
            other => format_err(other.to_string()),
        })?;
        recordings.push(rec);
    }
    if recordings.is_empty() {
        log::warn!("{}: no recordings found", path.display());
    }
    Ok(Dataset::new(recordings))
}

/// Index sets of one train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    fn from_test(n: usize, mut test: Vec<usize>) -> Split {
        test.sort_unstable();
        let mut in_test = vec![false; n];
        for &i in &test {
            in_test[i] = true;
        }
        let train = (0..n).filter(|&i| !in_test[i]).collect();
        Split { train, test }
    }
}

/// Stratified k-fold split over `indices` (positions into `labels`).
///
/// Each class is shuffled and dealt round-robin across folds; the starting
/// fold rotates from class to class so fold sizes stay balanced too.
pub fn stratified_kfold_indices(
    labels: &[u8],
    indices: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(Error::domain("k-fold needs k >= 2"));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        by_class.entry(labels[i]).or_default().push(i);
    }
    if let Some((c, members)) = by_class.iter().find(|(_, m)| m.len() < k) {
        return Err(Error::domain(format!(
            "class {c} has {} instances, fewer than k = {k}",
            members.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut offset = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            tests[(offset + j) % k].push(i);
        }
        offset = (offset + members.len()) % k;
    }
    let mut splits = Vec::with_capacity(k);
    for mut test in tests {
        test.sort_unstable();
        let mut in_test = vec![false; labels.len()];
        for &i in &test {
            in_test[i] = true;
        }
        let mut train: Vec<usize> = indices.iter().copied().filter(|&i| !in_test[i]).collect();
        train.sort_unstable();
        splits.push(Split { train, test });
    }
    Ok(splits)
}

pub fn stratified_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Split>> {
    let all: Vec<usize> = (0..dataset.len()).collect();
    stratified_kfold_indices(&dataset.labels(), &all, k, seed)
}

/// Withholds every recording of `participant` as the test set.
pub fn leave_one_person_out(dataset: &Dataset, participant: &str) -> Result<Split> {
    let participants = dataset.participants();
    if participants.len() < 2 {
        return Err(Error::domain(
            "leave-one-person-out needs at least 2 participants",
        ));
    }
    let test = dataset.indices_of_participant(participant);
    if test.is_empty() {
        return Err(Error::domain(format!("unknown participant `{participant}`")));
    }
    Ok(Split::from_test(dataset.len(), test))
}
