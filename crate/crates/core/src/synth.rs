//! Seeded multi-mode GPS trace generator with known ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::geo::{destination, GeoError, GpsPoint, Mode, Trajectory};
use crate::ingest::{IngestError, LabeledTrajectory};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid profile for {mode}: {message}")]
    Profile { mode: Mode, message: String },
    #[error("invalid generator setting: {0}")]
    Setting(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeProfile {
    pub mode: Mode,
    /// m/s.
    pub speed_mean: f64,
    /// m/s.
    pub speed_sd: f64,
    /// Standard deviation of the per-step heading change, degrees.
    pub heading_volatility: f64,
    /// Mean bout length in points.
    pub dwell: f64,
}

impl ModeProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |message: &str| Err(SynthError::Profile { mode: self.mode, message: message.into() });
        if !(self.speed_mean > 0.0 && self.speed_mean.is_finite()) {
            return bad("speed_mean must be positive");
        }
        if !(self.speed_sd >= 0.0 && self.speed_sd.is_finite()) {
            return bad("speed_sd must be non-negative");
        }
        if !(self.heading_volatility >= 0.0 && self.heading_volatility.is_finite()) {
            return bad("heading_volatility must be non-negative");
        }
        if !(self.dwell >= 1.0 && self.dwell.is_finite()) {
            return bad("dwell must be at least 1 point");
        }
        Ok(())
    }

    /// One speed from the normal truncated at zero, by inverse CDF.
    fn sample_speed<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.speed_sd == 0.0 {
            return self.speed_mean;
        }
        let n = Normal::new(self.speed_mean, self.speed_sd).expect("validated profile");
        let lo = n.cdf(0.0);
        let u = lo + (1.0 - lo) * rng.random::<f64>();
        n.inverse_cdf(u).max(0.0)
    }
}

/// Walk, bike, bus and car with overlapping speed ranges.
pub fn default_profiles() -> Vec<ModeProfile> {
    let p = |mode, speed_mean, speed_sd, heading_volatility| ModeProfile {
        mode,
        speed_mean,
        speed_sd,
        heading_volatility,
        dwell: 200.0,
    };
    vec![
        p(Mode::Walk, 1.4, 0.4, 15.0),
        p(Mode::Bike, 4.5, 1.2, 8.0),
        p(Mode::Bus, 8.0, 4.0, 6.0),
        p(Mode::Car, 14.0, 6.0, 4.0),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub profiles: Vec<ModeProfile>,
    pub persons: usize,
    pub points_per_person: usize,
    pub sample_interval_s: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            profiles: default_profiles(),
            persons: 20,
            points_per_person: 5000,
            sample_interval_s: 2.0,
            seed: 0,
        }
    }
}

const START_T: f64 = 1_224_763_200.0;
const ORIGIN: (f64, f64) = (39.98, 116.32);

/// One trajectory per person; person `i` draws from its own stream.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<LabeledTrajectory>, SynthError> {
    if cfg.profiles.is_empty() {
        return Err(SynthError::Setting("at least one profile is required".into()));
    }
    for p in &cfg.profiles {
        p.validate()?;
    }
    if cfg.points_per_person < 10 {
        return Err(SynthError::Setting(format!("points_per_person {} < 10", cfg.points_per_person)));
    }
    if !(cfg.sample_interval_s > 0.0 && cfg.sample_interval_s.is_finite()) {
        return Err(SynthError::Setting(format!("sample_interval_s {}", cfg.sample_interval_s)));
    }
    (0..cfg.persons).map(|i| generate_person(cfg, i)).collect()
}

fn generate_person(cfg: &SynthConfig, index: usize) -> Result<LabeledTrajectory, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let n_profiles = cfg.profiles.len();
    let mut current = rng.random_range(0..n_profiles);
    let mut heading = rng.random_range(0.0..360.0);
    let start = GpsPoint::new(
        ORIGIN.0 + rng.random_range(-0.05..0.05),
        ORIGIN.1 + rng.random_range(-0.05..0.05),
        START_T,
    )?;
    let mut points = Vec::with_capacity(cfg.points_per_person);
    let mut labels = Vec::with_capacity(cfg.points_per_person);
    points.push(start);
    for i in 1..cfg.points_per_person {
        let profile = &cfg.profiles[current];
        labels.push(profile.mode);
        let speed = profile.sample_speed(&mut rng);
        heading = (heading + gaussian(&mut rng) * profile.heading_volatility).rem_euclid(360.0);
        let t = START_T + i as f64 * cfg.sample_interval_s;
        let prev = points[i - 1];
        points.push(destination(&prev, heading, speed * cfg.sample_interval_s, t)?);

        // geometric bout lengths: leave the mode with probability 1/dwell
        if n_profiles > 1 && rng.random::<f64>() < 1.0 / profile.dwell {
            let mut next = rng.random_range(0..n_profiles - 1);
            if next >= current {
                next += 1;
            }
            current = next;
            heading = rng.random_range(0.0..360.0);
        }
    }
    // the final point inherits the mode of the leg that reached it
    labels.push(*labels.last().expect("at least 10 points"));
    let person = format!("{index:03}");
    Ok(LabeledTrajectory::new(Trajectory::new(person, points)?, labels)?)
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Index ranges of constant-label bouts.
pub fn bouts(labels: &[Mode]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            out.push(start..i);
            start = i;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::point_speed;

    fn small(profiles: Vec<ModeProfile>, points: usize) -> SynthConfig {
        SynthConfig { profiles, persons: 2, points_per_person: points, sample_interval_s: 2.0, seed: 5 }
    }

    #[test]
    fn single_profile_gives_one_label() {
        let cfg = small(vec![default_profiles()[1]], 300);
        for t in generate(&cfg).unwrap() {
            assert!(t.labels.iter().all(|&m| m == Mode::Bike));
        }
    }

    #[test]
    fn constant_speed_straight_line() {
        let p = ModeProfile { mode: Mode::Car, speed_mean: 12.0, speed_sd: 0.0, heading_volatility: 0.0, dwell: 50.0 };
        let cfg = small(vec![p], 400);
        let t = &generate(&cfg).unwrap()[0];
        for w in t.points().windows(2) {
            let v = point_speed(&w[0], &w[1]).unwrap();
            assert!((v - 12.0).abs() / 12.0 < 0.01, "{v}");
        }
    }

    #[test]
    fn default_speed_means_are_close_to_profiles() {
        let cfg = SynthConfig { persons: 2, points_per_person: 10_000, ..SynthConfig::default() };
        let data = generate(&cfg).unwrap();
        for prof in default_profiles() {
            let mut speeds = Vec::new();
            for t in &data {
                for (i, w) in t.points().windows(2).enumerate() {
                    if t.labels[i] == prof.mode {
                        speeds.push(point_speed(&w[0], &w[1]).unwrap());
                    }
                }
            }
            assert!(speeds.len() > 500, "{:?} has {} legs", prof.mode, speeds.len());
            let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
            assert!((mean - prof.speed_mean).abs() / prof.speed_mean < 0.10, "{:?} {mean}", prof.mode);
        }
    }

    #[test]
    fn determinism_and_independent_persons() {
        let cfg = small(default_profiles(), 500);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].points(), a[1].points());
        let more = generate(&SynthConfig { persons: 3, ..cfg.clone() }).unwrap();
        assert_eq!(more[1], a[1]);
        let other = generate(&SynthConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(other[0], a[0]);
    }

    #[test]
    fn timestamps_step_by_interval_and_bouts_cover_labels() {
        let cfg = small(default_profiles(), 2000);
        for t in generate(&cfg).unwrap() {
            for w in t.points().windows(2) {
                assert_eq!(w[1].t() - w[0].t(), 2.0);
            }
            let b = bouts(&t.labels);
            assert_eq!(b.first().unwrap().start, 0);
            assert_eq!(b.last().unwrap().end, t.len());
            assert!(b.windows(2).all(|w| w[0].end == w[1].start && t.labels[w[0].start] != t.labels[w[1].start]));
            assert!(b.len() > 1);
        }
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let mut p = default_profiles();
        p[0].speed_mean = 0.0;
        assert!(generate(&small(p, 100)).is_err());
        let mut p = default_profiles();
        p[1].speed_sd = -1.0;
        assert!(generate(&small(p, 100)).is_err());
        assert!(generate(&small(default_profiles(), 5)).is_err());
        assert!(generate(&small(vec![], 100)).is_err());
    }
}
