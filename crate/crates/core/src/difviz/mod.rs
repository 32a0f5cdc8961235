//! 2-DifViz: turns device-frame angular velocity into an integer pixel
//! trajectory on an imaginary canvas.
//!
//! Per sample: rotate the gyro vector into the world frame with the sample's
//! orientation, keep the two canvas components (drop roll), scale by the gain
//! `K` and the frame duration `F`, convert to whole pixels, and accumulate from
//! the origin.

mod render;

pub use render::{render_raster, render_svg, render_to_file, save_png, GrayImage, SvgStyle};

use serde::{Deserialize, Serialize};

use crate::datastore::Recording;
use crate::error::{Error, Result};
use crate::quatmath::{self, Quaternion, Vec3};

/// How real-valued pixel differentials become integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RoundingMode {
    /// Round every step independently, half away from zero.
    #[default]
    PerStep,
    /// Round the running sum and emit the difference, so fractional residue
    /// carries over and the trajectory does not drift.
    RemainderCarry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifVizConfig {
    /// Pixels per degree of arm rotation.
    pub sensitivity: f64,
    pub pixel_density: f64,
    /// Seconds per sample.
    pub frame_duration: f64,
    pub rounding: RoundingMode,
}

impl Default for DifVizConfig {
    fn default() -> Self {
        DifVizConfig {
            sensitivity: 5.0,
            pixel_density: 1.0,
            frame_duration: 1.0 / 50.0,
            rounding: RoundingMode::PerStep,
        }
    }
}

impl DifVizConfig {
    pub fn with_rounding(mut self, rounding: RoundingMode) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.sensitivity) || !ok(self.pixel_density) || !ok(self.frame_duration) {
            return Err(Error::domain(
                "sensitivity, pixel density and frame duration must be positive",
            ));
        }
        Ok(())
    }
}

/// Integer pixel trajectory; always starts at the origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateSequence {
    pub points: Vec<(i64, i64)>,
}

impl CoordinateSequence {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_real(&self) -> Vec<[f64; 2]> {
        self.points
            .iter()
            .map(|&(x, y)| [x as f64, y as f64])
            .collect()
    }

    pub fn scaled(&self, factor: i64) -> CoordinateSequence {
        CoordinateSequence {
            points: self
                .points
                .iter()
                .map(|&(x, y)| (x * factor, y * factor))
                .collect(),
        }
    }
}

pub fn rotate_to_world(gyro: Vec3, orientation: Quaternion) -> Result<Vec3> {
    quatmath::rotate_vector(orientation, gyro)
}

/// Keeps the two canvas components of a world-frame angular velocity and
/// discards roll.
pub fn extract_pitch_yaw(world: Vec3) -> (f64, f64) {
    (world.x, world.y)
}

/// Gain `K` in pixels per degree.
///
/// Pointer acceleration is not modelled: the gain is linear so that the
/// trajectory can be inverted exactly by the synthetic generator.
pub fn compute_gain(config: &DifVizConfig) -> f64 {
    config.sensitivity * config.pixel_density
}

/// Real-valued per-step pixel displacements, before integer conversion.
pub fn scaled_differentials(recording: &Recording, config: &DifVizConfig) -> Result<Vec<[f64; 2]>> {
    if recording.samples.is_empty() {
        return Err(Error::domain("cannot run 2-DifViz on an empty recording"));
    }
    config.validate()?;
    let step = compute_gain(config) * config.frame_duration;
    recording
        .samples
        .iter()
        .map(|s| {
            let world = rotate_to_world(s.gyro, s.quat)?;
            let (dx, dy) = extract_pitch_yaw(world);
            Ok([dx * step, dy * step])
        })
        .collect()
}

/// Integer conversion of real displacements according to `mode`.
pub fn quantize(real: &[[f64; 2]], mode: RoundingMode) -> Vec<(i64, i64)> {
    match mode {
        RoundingMode::PerStep => real
            .iter()
            .map(|d| (d[0].round() as i64, d[1].round() as i64))
            .collect(),
        RoundingMode::RemainderCarry => {
            let mut exact = [0.0f64; 2];
            let mut emitted = [0i64; 2];
            real.iter()
                .map(|d| {
                    let mut out = [0i64; 2];
                    for k in 0..2 {
                        exact[k] += d[k];
                        let target = exact[k].round() as i64;
                        out[k] = target - emitted[k];
                        emitted[k] = target;
                    }
                    (out[0], out[1])
                })
                .collect()
        }
    }
}

/// One integer `(dx, dy)` per sample.
pub fn differentials(recording: &Recording, config: &DifVizConfig) -> Result<Vec<(i64, i64)>> {
    let real = scaled_differentials(recording, config)?;
    Ok(quantize(&real, config.rounding))
}

pub fn accumulate(diffs: &[(i64, i64)]) -> CoordinateSequence {
    let mut points = Vec::with_capacity(diffs.len() + 1);
    let (mut x, mut y) = (0i64, 0i64);
    points.push((x, y));
    for &(dx, dy) in diffs {
        x += dx;
        y += dy;
        points.push((x, y));
    }
    CoordinateSequence { points }
}

/// Full 2-DifViz reconstruction of one recording.
pub fn reconstruct(recording: &Recording, config: &DifVizConfig) -> Result<CoordinateSequence> {
    Ok(accumulate(&differentials(recording, config)?))
}
