//! Synthetic recordings that invert the trajectory reconstruction.
//!
//! A digit template is warped by a participant style, traversed at a
//! participant-specific speed, and each step's displacement `d` is turned into
//! a world-frame angular rate `d / (K·F)`. That rate is expressed in the
//! device frame of a slowly wobbling orientation, so running the
//! reconstruction on the output recovers the warped template up to rounding
//! and sensor noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datastore::{Dataset, ImuSample, Recording, DEFAULT_RATE_HZ};
use crate::difviz::{compute_gain, DifVizConfig};
use crate::error::{Error, Result};
use crate::quatmath::{inverse, rotate_vector, Quaternion, Vec3};
use crate::NUM_CLASSES;

pub const MIN_SAMPLES: usize = 40;
pub const MAX_SAMPLES: usize = 160;

const TEMPLATE_DATA: &str = include_str!("../data/digits.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct DigitTemplate {
    pub digit: u8,
    /// Unit-box polyline, y up.
    pub polyline: Vec<[f64; 2]>,
}

impl DigitTemplate {
    pub fn validate(&self) -> Result<()> {
        if self.digit as usize >= NUM_CLASSES {
            return Err(Error::domain(format!("digit {} out of range", self.digit)));
        }
        if self.polyline.len() < 8 {
            return Err(Error::domain(format!(
                "template {} has {} points, needs at least 8",
                self.digit,
                self.polyline.len()
            )));
        }
        if self
            .polyline
            .iter()
            .any(|p| !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]))
        {
            return Err(Error::domain(format!("template {} leaves the unit box", self.digit)));
        }
        Ok(())
    }
}

/// Parses the plain-text template format: `digit N` headers followed by
/// `x y` lines; `#` starts a comment.
pub fn parse_templates(text: &str) -> Result<Vec<DigitTemplate>> {
    let mut out: Vec<DigitTemplate> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = || Error::domain(format!("template line {}: cannot parse `{line}`", i + 1));
        if let Some(rest) = line.strip_prefix("digit") {
            let digit = rest.trim().parse::<u8>().map_err(|_| bad())?;
            out.push(DigitTemplate {
                digit,
                polyline: Vec::new(),
            });
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<f64>);
        let (Some(Ok(x)), Some(Ok(y)), None) = (it.next(), it.next(), it.next()) else {
            return Err(bad());
        };
        out.last_mut().ok_or_else(bad)?.polyline.push([x, y]);
    }
    for t in &out {
        t.validate()?;
    }
    Ok(out)
}

/// The ten built-in templates, indexed by digit.
pub fn builtin_templates() -> Vec<DigitTemplate> {
    let mut t = parse_templates(TEMPLATE_DATA).expect("built-in templates are valid");
    t.sort_by_key(|t| t.digit);
    assert_eq!(t.len(), NUM_CLASSES);
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantStyle {
    pub id: String,
    /// Template size in pixels.
    pub scale: f64,
    /// Shear angle in radians, positive leans right.
    pub slant: f64,
    /// Multiplies the number of samples per stroke.
    pub speed_factor: f64,
    /// Device-frame gyroscope noise, rate units.
    pub gyro_noise_std: f64,
    /// World-frame roll rate noise.
    pub roll_noise_std: f64,
    pub orientation: Quaternion,
    /// Orientation wobble per step, radians.
    pub wobble_std: f64,
    pub accel_noise_std: f64,
    /// Persistent per-participant template distortion, unit-box units.
    pub shape_jitter: f64,
    /// Fresh distortion per recording, unit-box units.
    pub take_jitter: f64,
    /// Per-recording relative size and sample-count variation.
    pub take_scale_jitter: f64,
    /// Seed stream for the participant's persistent distortion.
    pub stream: u64,
}

impl ParticipantStyle {
    /// Noise-free style with the given orientation.
    pub fn clean(orientation: Quaternion) -> Self {
        ParticipantStyle {
            id: "P00".into(),
            scale: 120.0,
            slant: 0.0,
            speed_factor: 1.0,
            gyro_noise_std: 0.0,
            roll_noise_std: 0.0,
            orientation,
            wobble_std: 0.0,
            accel_noise_std: 0.0,
            shape_jitter: 0.0,
            take_jitter: 0.0,
            take_scale_jitter: 0.0,
            stream: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let stds = [
            self.gyro_noise_std,
            self.roll_noise_std,
            self.wobble_std,
            self.accel_noise_std,
            self.shape_jitter,
            self.take_jitter,
            self.take_scale_jitter,
        ];
        if !(self.scale > 0.0) || !(self.speed_factor > 0.0) || !self.slant.is_finite() {
            return Err(Error::domain("style needs positive scale and speed and a finite slant"));
        }
        if stds.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::domain("style noise levels must be finite and nonnegative"));
        }
        if (self.orientation.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::domain("style orientation must be a unit quaternion"));
        }
        Ok(())
    }
}

/// Ranges from which participant styles are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub name: String,
    pub scale: (f64, f64),
    pub slant: (f64, f64),
    pub speed: (f64, f64),
    pub gyro_noise_std: f64,
    pub roll_noise_std: f64,
    /// Spread of base orientations around the nominal wearing position, radians.
    pub orientation_spread: f64,
    pub wobble_std: f64,
    pub accel_noise_std: f64,
    pub shape_jitter: f64,
    pub take_jitter: f64,
    pub take_scale_jitter: f64,
}

impl NoiseProfile {
    pub fn clean() -> Self {
        NoiseProfile {
            name: "clean".into(),
            scale: (120.0, 120.0),
            slant: (0.0, 0.0),
            speed: (1.0, 1.0),
            gyro_noise_std: 0.0,
            roll_noise_std: 0.0,
            orientation_spread: 0.0,
            wobble_std: 0.0,
            accel_noise_std: 0.0,
            shape_jitter: 0.0,
            take_jitter: 0.0,
            take_scale_jitter: 0.0,
        }
    }

    pub fn standard() -> Self {
        NoiseProfile {
            name: "default".into(),
            scale: (90.0, 170.0),
            slant: (-0.2, 0.2),
            speed: (0.75, 1.35),
            gyro_noise_std: 4.0,
            roll_noise_std: 4.0,
            orientation_spread: 12f64.to_radians(),
            wobble_std: 2f64.to_radians(),
            accel_noise_std: 0.05,
            shape_jitter: 0.03,
            take_jitter: 0.025,
            take_scale_jitter: 0.1,
        }
    }

    pub fn hard() -> Self {
        NoiseProfile {
            name: "hard".into(),
            scale: (70.0, 200.0),
            slant: (-0.35, 0.35),
            speed: (0.6, 1.6),
            gyro_noise_std: 10.0,
            roll_noise_std: 10.0,
            orientation_spread: 25f64.to_radians(),
            wobble_std: 4f64.to_radians(),
            accel_noise_std: 0.1,
            shape_jitter: 0.06,
            take_jitter: 0.05,
            take_scale_jitter: 0.2,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "clean" => Ok(Self::clean()),
            "default" => Ok(Self::standard()),
            "hard" => Ok(Self::hard()),
            other => Err(Error::domain(format!(
                "unknown noise profile `{other}` (expected clean, default or hard)"
            ))),
        }
    }

    pub fn draw_style(&self, id: String, rng: &mut impl Rng) -> ParticipantStyle {
        let pick = |(lo, hi): (f64, f64), rng: &mut dyn rand::RngCore| {
            if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                lo
            }
        };
        let scale = pick(self.scale, rng);
        let slant = pick(self.slant, rng);
        let speed_factor = pick(self.speed, rng);
        let axis = random_unit(rng);
        let angle = self.orientation_spread * rng.gen::<f64>();
        let orientation = nominal_orientation() * Quaternion::from_axis_angle(axis, angle);
        ParticipantStyle {
            id,
            scale,
            slant,
            speed_factor,
            gyro_noise_std: self.gyro_noise_std,
            roll_noise_std: self.roll_noise_std,
            orientation: normalize_unit(orientation),
            wobble_std: self.wobble_std,
            accel_noise_std: self.accel_noise_std,
            shape_jitter: self.shape_jitter,
            take_jitter: self.take_jitter,
            take_scale_jitter: self.take_scale_jitter,
            stream: rng.gen(),
        }
    }
}

/// Typical wearing orientation of the armband relative to the world frame.
pub fn nominal_orientation() -> Quaternion {
    Quaternion::from_axis_angle(Vec3::new(0.3, 1.0, 0.2), 0.7)
}

fn normalize_unit(q: Quaternion) -> Quaternion {
    let n = q.norm();
    Quaternion::new(q.w / n, q.x / n, q.y / n, q.z / n)
}

fn random_unit(rng: &mut (impl Rng + ?Sized)) -> Vec3 {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v = Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng));
        if v.norm() > 1e-6 {
            return v.scale(1.0 / v.norm());
        }
    }
}

/// Uniformly random unit quaternion.
pub fn random_orientation(rng: &mut impl Rng) -> Quaternion {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let q = Quaternion::new(n.sample(rng), n.sample(rng), n.sample(rng), n.sample(rng));
        if q.norm() > 1e-6 {
            return normalize_unit(q);
        }
    }
}

/// Smooth random displacement field over the polyline: independent offsets
/// at each vertex, averaged with their neighbours.
fn vertex_noise(n: usize, std: f64, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    if std == 0.0 {
        return vec![[0.0; 2]; n];
    }
    let dist = Normal::new(0.0, std).expect("finite std");
    let raw: Vec<[f64; 2]> = (0..n).map(|_| [dist.sample(rng), dist.sample(rng)]).collect();
    (0..n)
        .map(|i| {
            let a = raw[i.saturating_sub(1)];
            let b = raw[i];
            let c = raw[(i + 1).min(n - 1)];
            [(a[0] + 2.0 * b[0] + c[0]) / 4.0, (a[1] + 2.0 * b[1] + c[1]) / 4.0]
        })
        .collect()
}

/// Applies the participant's persistent distortion, a per-recording
/// distortion drawn from `rng`, slant and scale. Output is in pixels.
pub fn warp_template(template: &DigitTemplate, style: &ParticipantStyle, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let n = template.polyline.len();
    let mut own = ChaCha8Rng::seed_from_u64(style.stream ^ (template.digit as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let persistent = vertex_noise(n, style.shape_jitter, &mut own);
    let take = vertex_noise(n, style.take_jitter, rng);
    let size = if style.take_scale_jitter > 0.0 {
        style.scale * (1.0 + rng.gen_range(-style.take_scale_jitter..style.take_scale_jitter))
    } else {
        style.scale
    };
    let shear = style.slant.tan();
    template
        .polyline
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = p[0] + persistent[i][0] + take[i][0];
            let y = p[1] + persistent[i][1] + take[i][1];
            [(x + shear * (y - 0.5)) * size, y * size]
        })
        .collect()
}

pub fn path_length(path: &[[f64; 2]]) -> f64 {
    path.windows(2)
        .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
        .sum()
}

/// Point at arc-length fraction `s ∈ [0, 1]` along `path`.
fn point_at(path: &[[f64; 2]], cumulative: &[f64], s: f64) -> [f64; 2] {
    let total = *cumulative.last().expect("nonempty path");
    let target = s.clamp(0.0, 1.0) * total;
    let seg = cumulative.partition_point(|&c| c < target).clamp(1, path.len() - 1);
    let (c0, c1) = (cumulative[seg - 1], cumulative[seg]);
    let f = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
    let (a, b) = (path[seg - 1], path[seg]);
    [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
}

/// `count` points spaced along `path` by arc length, both endpoints included.
/// `ease` in `(-1, 1)` bends the speed profile while keeping it monotone.
pub fn arc_resample(path: &[[f64; 2]], count: usize, ease: f64) -> Vec<[f64; 2]> {
    let mut cumulative = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    cumulative.push(0.0);
    for w in path.windows(2) {
        acc += (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        cumulative.push(acc);
    }
    let tau = std::f64::consts::TAU;
    (0..count)
        .map(|i| {
            let u = if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 };
            let s = u - ease * (tau * u).sin() / tau;
            point_at(path, &cumulative, s)
        })
        .collect()
}

/// A generated recording and the pixel path it encodes, shifted to start at
/// the origin.
pub struct Generated {
    pub recording: Recording,
    pub path: Vec<[f64; 2]>,
}

/// Number of samples for a path: about 4 px per sample at speed factor 1.
fn sample_count(length: f64, speed_factor: f64) -> usize {
    ((length / 4.0) * speed_factor).round().clamp(MIN_SAMPLES as f64, MAX_SAMPLES as f64) as usize
}

pub fn generate(
    template: &DigitTemplate,
    style: &ParticipantStyle,
    config: &DifVizConfig,
    seed: u64,
) -> Result<Generated> {
    template.validate()?;
    style.validate()?;
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let warped = warp_template(template, style, &mut rng);
    let speed = if style.take_scale_jitter > 0.0 {
        style.speed_factor * (1.0 + rng.gen_range(-style.take_scale_jitter..style.take_scale_jitter))
    } else {
        style.speed_factor
    };
    let samples = sample_count(path_length(&warped), speed);
    let ease = if style.take_jitter > 0.0 { rng.gen_range(-0.3..0.3) } else { 0.0 };
    let mut path = arc_resample(&warped, samples + 1, ease);
    let origin = path[0];
    for p in &mut path {
        p[0] -= origin[0];
        p[1] -= origin[1];
    }

    let kf = compute_gain(config) * config.frame_duration;
    let gauss = |std: f64| Normal::new(0.0, std).expect("finite std");
    let gyro_noise = gauss(style.gyro_noise_std);
    let roll_noise = gauss(style.roll_noise_std);
    let accel_noise = gauss(style.accel_noise_std);
    let wobble = gauss(style.wobble_std);

    let mut drift = Vec3::new(0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(samples);
    for t in 0..samples {
        let d = [path[t + 1][0] - path[t][0], path[t + 1][1] - path[t][1]];
        let world = Vec3::new(d[0] / kf, d[1] / kf, roll_noise.sample(&mut rng));
        if style.wobble_std > 0.0 {
            // mean-reverting walk so the orientation stays near its base
            let step = Vec3::new(wobble.sample(&mut rng), wobble.sample(&mut rng), wobble.sample(&mut rng));
            drift = drift.scale(0.9) + step;
        }
        let q = if drift.norm() > 0.0 {
            style.orientation * Quaternion::from_axis_angle(drift, drift.norm())
        } else {
            style.orientation
        };
        let q = normalize_unit(q);
        let device = rotate_vector(inverse(q)?, world)?;
        let gyro = Vec3::new(
            device.x + gyro_noise.sample(&mut rng),
            device.y + gyro_noise.sample(&mut rng),
            device.z + gyro_noise.sample(&mut rng),
        );
        let accel = Vec3::new(
            accel_noise.sample(&mut rng),
            accel_noise.sample(&mut rng),
            accel_noise.sample(&mut rng),
        );
        out.push(ImuSample {
            t: t as f64 / DEFAULT_RATE_HZ,
            accel,
            gyro,
            quat: q,
        });
    }
    Ok(Generated {
        recording: Recording {
            participant_id: style.id.clone(),
            label: template.digit,
            sample_rate: DEFAULT_RATE_HZ,
            samples: out,
            emg: None,
        },
        path,
    })
}

pub fn generate_recording(
    template: &DigitTemplate,
    style: &ParticipantStyle,
    config: &DifVizConfig,
    seed: u64,
) -> Result<Recording> {
    Ok(generate(template, style, config, seed)?.recording)
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.wrapping_mul(0xc2b2_ae3d_27d4_eb4f);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `n_participants × 10 × per_digit` recordings, participants named
/// `P01`, `P02`, …, ordered by participant, digit, repetition.
pub fn generate_dataset(
    n_participants: usize,
    per_digit: usize,
    profile: &NoiseProfile,
    seed: u64,
) -> Result<Dataset> {
    if n_participants == 0 || per_digit == 0 {
        return Err(Error::domain("participants and per-digit counts must be at least 1"));
    }
    let templates = builtin_templates();
    let config = DifVizConfig::default();
    let mut recordings = Vec::with_capacity(n_participants * per_digit * NUM_CLASSES);
    for p in 0..n_participants {
        let mut style_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, p as u64, u64::MAX));
        let style = profile.draw_style(format!("P{:02}", p + 1), &mut style_rng);
        for t in &templates {
            for r in 0..per_digit {
                let s = derive_seed(seed, p as u64, (t.digit as u64) << 32 | r as u64);
                recordings.push(generate_recording(t, &style, &config, s)?);
            }
        }
    }
    Ok(Dataset::new(recordings))
}

/// Resamples both paths to 100 points by arc length, fits `b ≈ s·a + c` by
/// least squares and returns the RMSE relative to the diagonal of `b`'s
/// bounding box.
pub fn normalized_rmse(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    const N: usize = 100;
    let ra = arc_resample(a, N, 0.0);
    let rb = arc_resample(b, N, 0.0);
    let mean = |v: &[[f64; 2]]| {
        let s = v.iter().fold([0.0; 2], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
        [s[0] / N as f64, s[1] / N as f64]
    };
    let (ma, mb) = (mean(&ra), mean(&rb));
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, q) in ra.iter().zip(&rb) {
        let (ax, ay) = (p[0] - ma[0], p[1] - ma[1]);
        num += ax * (q[0] - mb[0]) + ay * (q[1] - mb[1]);
        den += ax * ax + ay * ay;
    }
    let s = if den > 0.0 { num / den } else { 0.0 };
    let mut sq = 0.0;
    for (p, q) in ra.iter().zip(&rb) {
        let ex = s * (p[0] - ma[0]) + mb[0] - q[0];
        let ey = s * (p[1] - ma[1]) + mb[1] - q[1];
        sq += ex * ex + ey * ey;
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for q in b {
        for k in 0..2 {
            lo[k] = lo[k].min(q[k]);
            hi[k] = hi[k].max(q[k]);
        }
    }
    let diag = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
    (sq / N as f64).sqrt() / diag
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::difviz::{reconstruct, RoundingMode};

    fn carry() -> DifVizConfig {
        DifVizConfig::default().with_rounding(RoundingMode::RemainderCarry)
    }

    fn unit_template_px(t: &DigitTemplate, scale: f64) -> Vec<[f64; 2]> {
        t.polyline.iter().map(|p| [p[0] * scale, p[1] * scale]).collect()
    }

    #[test]
    fn builtin_templates_are_valid() {
        let t = builtin_templates();
        for (i, tpl) in t.iter().enumerate() {
            assert_eq!(tpl.digit as usize, i);
            tpl.validate().unwrap();
        }
    }

    #[test]
    fn template_parser_errors() {
        assert!(parse_templates("1 2\n").is_err());
        assert!(parse_templates("digit 3\n0.1 0.2 0.3\n").is_err());
        assert!(parse_templates("digit 3\n0.1 0.2\n").is_err());
    }

    #[test]
    fn clean_round_trip_identity_orientation() {
        let style = ParticipantStyle::clean(Quaternion::IDENTITY);
        for t in builtin_templates() {
            let rec = generate_recording(&t, &style, &carry(), 1).unwrap();
            assert!((MIN_SAMPLES..=MAX_SAMPLES).contains(&rec.len()));
            let coords = reconstruct(&rec, &carry()).unwrap().to_real();
            let err = normalized_rmse(&coords, &unit_template_px(&t, style.scale));
            assert!(err < 0.05, "digit {}: {err}", t.digit);
        }
    }

    #[test]
    fn path_is_recovered_within_a_pixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let style = ParticipantStyle::clean(random_orientation(&mut rng));
        let t = &builtin_templates()[8];
        let g = generate(t, &style, &carry(), 9).unwrap();
        let coords = reconstruct(&g.recording, &carry()).unwrap().to_real();
        assert_eq!(coords.len(), g.path.len());
        for (c, p) in coords.iter().zip(&g.path) {
            assert!((c[0] - p[0]).abs() <= 1.0 && (c[1] - p[1]).abs() <= 1.0);
        }
    }

    #[test]
    fn deterministic_and_unit_quaternions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let style = NoiseProfile::standard().draw_style("P01".into(), &mut rng);
        let t = &builtin_templates()[4];
        let a = generate_recording(t, &style, &DifVizConfig::default(), 77).unwrap();
        let b = generate_recording(t, &style, &DifVizConfig::default(), 77).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        for s in &a.samples {
            assert!((s.quat.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dataset_counts() {
        let ds = generate_dataset(3, 2, &NoiseProfile::standard(), 5).unwrap();
        assert_eq!(ds.len(), 60);
        let mut hist = [0; 10];
        for l in ds.labels() {
            hist[l as usize] += 1;
        }
        assert!(hist.iter().all(|&h| h == 6));
        assert_eq!(ds.participants(), vec!["P01", "P02", "P03"]);
        assert!(generate_dataset(0, 1, &NoiseProfile::clean(), 0).is_err());
    }

    #[test]
    fn participants_differ_in_speed() {
        let ds = generate_dataset(2, 10, &NoiseProfile::standard(), 21).unwrap();
        let mean_len = |p: &str| {
            let idx = ds.indices_of_participant(p);
            idx.iter().map(|&i| ds.recordings[i].len() as f64).sum::<f64>() / idx.len() as f64
        };
        assert!((mean_len("P01") - mean_len("P02")).abs() > 1.0);
    }

    #[test]
    fn rmse_is_scale_and_shift_invariant() {
        let t = &builtin_templates()[2].polyline;
        let moved: Vec<[f64; 2]> = t.iter().map(|p| [3.0 * p[0] + 5.0, 3.0 * p[1] - 1.0]).collect();
        assert!(normalized_rmse(&moved, t) < 1e-12);
        assert!(normalized_rmse(&builtin_templates()[1].polyline, t) > 0.05);
    }
}
