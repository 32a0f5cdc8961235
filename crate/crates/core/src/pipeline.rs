//! Preprocessing chains for the two recurrent classifiers.
//!
//! Trajectory chain (coordinate sequences): smooth, drop redundant points,
//! whiten, interpolate to 100 points.
//!
//! Raw IMU chain: scale each of the 10 channels by its training-split
//! max-abs value, then resample every recording to the training split's
//! longest length.

use serde::{Deserialize, Serialize};

use crate::datastore::Recording;
use crate::difviz::CoordinateSequence;
use crate::error::{Error, Result};

pub const SEQUENCE_LEN: usize = 100;
pub const REDUNDANCY_THRESHOLD: f64 = 5.0;
pub const IMU_CHANNELS: usize = 10;
/// Scaled test values are clamped to this magnitude.
pub const SCALE_CLAMP: f64 = 1.5;

/// Whitened, fixed-length trajectory fed to the trajectory classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedSequence {
    pub values: Vec<[f64; 2]>,
}

/// Scaled and resampled 10-channel IMU matrix, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedImu {
    pub rows: Vec<[f64; IMU_CHANNELS]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub max_abs: [f64; IMU_CHANNELS],
    pub t_max: usize,
}

/// Five-point centered moving average with replicate padding at both ends.
pub fn smooth(coords: &CoordinateSequence) -> Vec<[f64; 2]> {
    let pts = coords.to_real();
    let n = pts.len();
    let last = n.saturating_sub(1) as isize;
    (0..n as isize)
        .map(|t| {
            let mut acc = [0.0; 2];
            for o in -2..=2 {
                let p = pts[(t + o).clamp(0, last) as usize];
                acc[0] += p[0];
                acc[1] += p[1];
            }
            [acc[0] / 5.0, acc[1] / 5.0]
        })
        .collect()
}

/// Keeps a point only if it lies more than `threshold` away from the last
/// kept point. The first point is always kept.
pub fn remove_redundant(coords: &[[f64; 2]], threshold: f64) -> Vec<[f64; 2]> {
    let mut out: Vec<[f64; 2]> = Vec::with_capacity(coords.len());
    for &p in coords {
        match out.last() {
            None => out.push(p),
            Some(anchor) => {
                let d = ((p[0] - anchor[0]).powi(2) + (p[1] - anchor[1]).powi(2)).sqrt();
                if d > threshold {
                    out.push(p);
                }
            }
        }
    }
    out
}

/// Subtracts the mean and divides by the standard deviation, both taken over
/// all x and y values of the sequence together.
pub fn standard_scale(coords: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    if coords.len() < 2 {
        return Err(Error::domain("standard scaling needs at least 2 points"));
    }
    let n = (coords.len() * 2) as f64;
    let mean = coords.iter().map(|p| p[0] + p[1]).sum::<f64>() / n;
    let var = coords
        .iter()
        .map(|p| (p[0] - mean).powi(2) + (p[1] - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if !(std > 1e-12 * (1.0 + mean.abs())) {
        return Err(Error::domain(
            "unusable recording: trajectory has zero spread",
        ));
    }
    Ok(coords
        .iter()
        .map(|p| [(p[0] - mean) / std, (p[1] - mean) / std])
        .collect())
}

/// Piecewise-linear resampling over the sample index; end points are kept
/// exactly.
pub fn resample_rows<const N: usize>(rows: &[[f64; N]], target_len: usize) -> Result<Vec<[f64; N]>> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::domain("resampling needs at least 2 rows"));
    }
    if target_len < 2 {
        return Err(Error::domain("resampling target length must be at least 2"));
    }
    let span = (n - 1) as f64;
    let denom = (target_len - 1) as f64;
    let mut out = Vec::with_capacity(target_len);
    for j in 0..target_len {
        if j == target_len - 1 {
            out.push(rows[n - 1]);
            continue;
        }
        let u = (j as f64 * span) / denom;
        let i = (u.floor() as usize).min(n - 2);
        let f = u - i as f64;
        let (a, b) = (&rows[i], &rows[i + 1]);
        let mut row = [0.0; N];
        for k in 0..N {
            row[k] = if f == 0.0 { a[k] } else { a[k] + (b[k] - a[k]) * f };
        }
        out.push(row);
    }
    Ok(out)
}

pub fn interpolate_to(coords: &[[f64; 2]], target_len: usize) -> Result<Vec<[f64; 2]>> {
    resample_rows(coords, target_len)
}

pub fn preprocess_difviz(coords: &CoordinateSequence) -> Result<ProcessedSequence> {
    if coords.is_empty() {
        return Err(Error::domain("empty coordinate sequence"));
    }
    let smoothed = smooth(coords);
    let kept = remove_redundant(&smoothed, REDUNDANCY_THRESHOLD);
    if kept.len() < 2 {
        return Err(Error::domain(format!(
            "unusable recording: {} point(s) left after redundancy removal",
            kept.len()
        )));
    }
    let scaled = standard_scale(&kept)?;
    Ok(ProcessedSequence {
        values: interpolate_to(&scaled, SEQUENCE_LEN)?,
    })
}

/// Per-channel max-abs and longest length over a training split.
pub fn fit_scaler<'a, I>(train: I) -> Result<ScalerStats>
where
    I: IntoIterator<Item = &'a Recording>,
{
    let mut max_abs = [0.0f64; IMU_CHANNELS];
    let mut t_max = 0usize;
    let mut count = 0usize;
    for rec in train {
        count += 1;
        t_max = t_max.max(rec.samples.len());
        for s in &rec.samples {
            for (m, v) in max_abs.iter_mut().zip(s.channels()) {
                *m = m.max(v.abs());
            }
        }
    }
    if count == 0 {
        return Err(Error::domain("cannot fit scaler on an empty training set"));
    }
    if t_max < 2 {
        return Err(Error::domain("training recordings are too short to resample"));
    }
    // A channel that is identically zero stays zero.
    for m in max_abs.iter_mut() {
        if *m == 0.0 {
            *m = 1.0;
        }
    }
    Ok(ScalerStats { max_abs, t_max })
}

pub fn max_abs_scale(recording: &Recording, stats: &ScalerStats) -> Vec<[f64; IMU_CHANNELS]> {
    recording
        .samples
        .iter()
        .map(|s| {
            let mut row = s.channels();
            for (v, m) in row.iter_mut().zip(stats.max_abs.iter()) {
                *v = (*v / m).clamp(-SCALE_CLAMP, SCALE_CLAMP);
            }
            row
        })
        .collect()
}

pub fn resample(rows: &[[f64; IMU_CHANNELS]], t_max: usize) -> Result<StandardizedImu> {
    Ok(StandardizedImu {
        rows: resample_rows(rows, t_max)?,
    })
}

pub fn standardize_imu(recording: &Recording, stats: &ScalerStats) -> Result<StandardizedImu> {
    resample(&max_abs_scale(recording, stats), stats.t_max)
}
