use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rng::{stream, STREAM_GENERATE};
use super::{
    Accessories, BlackBodySpec, CameraRig, DetectionNoise, DriftProfile, PersonSpec, Scenario,
    SimError, Waypoint,
};
use crate::domain::{AppearanceVector, DEFAULT_APPEARANCE_DIM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccessoryOdds {
    pub mask: f64,
    pub glasses: f64,
    pub hat: f64,
}

impl Default for AccessoryOdds {
    fn default() -> Self {
        Self { mask: 0.3, glasses: 0.3, hat: 0.2 }
    }
}

/// Population and world settings for [`generate_scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub people: usize,
    pub febrile: usize,
    pub febrile_range: (f64, f64),
    pub normal_mean: f64,
    pub normal_sd: f64,
    pub normal_range: (f64, f64),
    pub accessories: AccessoryOdds,
    /// Seconds between consecutive arrivals, drawn uniformly.
    pub arrival_interval: (f64, f64),
    /// Empty-scene time before the first arrival (background warm-up).
    pub lead_in: f64,
    /// Empty-scene time after the last exit.
    pub tail: f64,
    pub start_depth: f64,
    pub end_depth: f64,
    pub lateral_range: (f64, f64),
    /// Maximum lateral drift over one transit, metres.
    pub lateral_drift: f64,
    pub speed_range: (f64, f64),
    pub height_range: (f64, f64),
    pub frame_rate: f64,
    pub geometry: CameraRig,
    pub ambient_temp: f64,
    pub attenuation_kappa: f64,
    pub thermal_noise_sigma: f64,
    pub visual_noise: u8,
    pub drift: DriftProfile,
    pub black_body: BlackBodySpec,
    pub detection_noise: DetectionNoise,
    pub appearance_dim: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            people: 10,
            febrile: 1,
            febrile_range: (38.5, 39.5),
            normal_mean: 36.7,
            normal_sd: 0.3,
            normal_range: (35.8, 37.5),
            accessories: AccessoryOdds::default(),
            arrival_interval: (1.8, 3.2),
            lead_in: 2.0,
            tail: 1.0,
            start_depth: 4.6,
            end_depth: 0.6,
            lateral_range: (-0.6, 0.6),
            lateral_drift: 0.2,
            speed_range: (0.9, 1.4),
            height_range: (1.58, 1.88),
            frame_rate: 8.0,
            geometry: CameraRig::default(),
            ambient_temp: 22.0,
            attenuation_kappa: 0.05,
            thermal_noise_sigma: 0.1,
            visual_noise: 3,
            drift: DriftProfile::none(),
            black_body: BlackBodySpec::default(),
            detection_noise: DetectionNoise::default(),
            appearance_dim: DEFAULT_APPEARANCE_DIM,
        }
    }
}

impl GenerationConfig {
    /// 100 people, 5 febrile, randomized accessories: the screening benchmark.
    pub fn benchmark() -> Self {
        Self { people: 100, febrile: 5, ..Self::default() }
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.febrile > self.people {
            return bad("more febrile people than people");
        }
        let ordered = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if !ordered(self.febrile_range)
            || !ordered(self.normal_range)
            || !ordered(self.arrival_interval)
            || !ordered(self.lateral_range)
            || !ordered(self.speed_range)
            || !ordered(self.height_range)
        {
            return bad("ranges must be finite and ordered");
        }
        if self.febrile_range.0 < 30.0 || self.febrile_range.1 > 45.0 {
            return bad("febrile range outside [30, 45]");
        }
        if self.normal_range.0 < 30.0 || self.normal_range.1 > 45.0 {
            return bad("normal range outside [30, 45]");
        }
        if !(self.speed_range.0 > 0.0) || !(self.arrival_interval.0 > 0.0) {
            return bad("speeds and arrival intervals must be positive");
        }
        if !(self.end_depth > 0.05 && self.start_depth > self.end_depth) {
            return bad("start_depth must exceed end_depth > 0.05");
        }
        if !(self.lead_in >= 0.0 && self.tail >= 0.0) || !(self.normal_sd >= 0.0) {
            return bad("negative lead-in, tail or sd");
        }
        if self.appearance_dim == 0 {
            return bad("appearance_dim must be positive");
        }
        Ok(())
    }
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> AppearanceVector {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(a) = AppearanceVector::new(v) {
            return a;
        }
    }
}

fn uniform(rng: &mut impl Rng, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.random_range(r.0..r.1)
    } else {
        r.0
    }
}

/// Builds a reproducible scenario: identical `(config, seed)` give identical
/// scenarios.
pub fn generate_scenario(config: &GenerationConfig, seed: u64) -> Result<Scenario, SimError> {
    config.validate()?;
    let mut rng = stream(seed, 0, STREAM_GENERATE);

    let mut febrile_flags = vec![false; config.people];
    febrile_flags.iter_mut().take(config.febrile).for_each(|f| *f = true);
    febrile_flags.shuffle(&mut rng);

    let normal = Normal::new(config.normal_mean, config.normal_sd.max(1e-12))
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;

    let mut people = Vec::with_capacity(config.people);
    let mut arrival = config.lead_in;
    let mut last_exit = config.lead_in;
    for (i, &febrile) in febrile_flags.iter().enumerate() {
        if i > 0 {
            arrival += uniform(&mut rng, config.arrival_interval);
        }
        let core_temp = if febrile {
            uniform(&mut rng, config.febrile_range)
        } else {
            normal.sample(&mut rng).clamp(config.normal_range.0, config.normal_range.1)
        };
        let speed = uniform(&mut rng, config.speed_range);
        let x0 = uniform(&mut rng, config.lateral_range);
        let x1 = (x0 + uniform(&mut rng, (-config.lateral_drift, config.lateral_drift)))
            .clamp(config.lateral_range.0, config.lateral_range.1);
        let transit = (config.start_depth - config.end_depth) / speed;
        let accessories = Accessories {
            mask: rng.random_bool(config.accessories.mask.clamp(0.0, 1.0)),
            glasses: rng.random_bool(config.accessories.glasses.clamp(0.0, 1.0)),
            hat: rng.random_bool(config.accessories.hat.clamp(0.0, 1.0)),
        };
        let light_shirt = rng.random_bool(0.5);
        let shirt_tone =
            if light_shirt { rng.random_range(185..=235) } else { rng.random_range(25..=70) };
        let hat_tone = if rng.random_bool(0.5) { 225 } else { 30 };
        let person = PersonSpec {
            id: i as u32 + 1,
            core_temp,
            trajectory: vec![
                Waypoint { t: arrival, x: x0, z: config.start_depth },
                Waypoint { t: arrival + transit, x: x1, z: config.end_depth },
            ],
            accessories,
            appearance_identity: random_unit(&mut rng, config.appearance_dim),
            height: uniform(&mut rng, config.height_range),
            head_scale: uniform(&mut rng, (0.96, 1.04)),
            shirt_tone,
            hat_tone,
        };
        last_exit = last_exit.max(person.exit_time());
        people.push(person);
    }

    let duration = if people.is_empty() {
        config.lead_in.max(1.0 / config.frame_rate)
    } else {
        last_exit + config.tail
    };
    let scenario = Scenario {
        people,
        duration,
        frame_rate: config.frame_rate,
        geometry: config.geometry.clone(),
        ambient_temp: config.ambient_temp,
        attenuation_kappa: config.attenuation_kappa,
        thermal_noise_sigma: config.thermal_noise_sigma,
        visual_noise: config.visual_noise,
        drift: config.drift.clone(),
        black_body: config.black_body.clone(),
        detection_noise: config.detection_noise.clone(),
        rng_seed: seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_has_exact_febrile_count() {
        let s = generate_scenario(&GenerationConfig::benchmark(), 7).unwrap();
        assert_eq!(s.people.len(), 100);
        assert_eq!(s.people.iter().filter(|p| p.core_temp >= 38.5).count(), 5);
        assert!(s.people.iter().all(|p| p.core_temp < 38.0 || p.core_temp >= 38.5));
    }

    #[test]
    fn empty_population_is_valid() {
        let cfg = GenerationConfig { people: 0, febrile: 0, ..Default::default() };
        let s = generate_scenario(&cfg, 1).unwrap();
        assert!(s.people.is_empty());
        assert!(s.duration > 0.0);
        assert!(s.frame_count() >= 1);
    }

    #[test]
    fn same_seed_same_serialization() {
        let cfg = GenerationConfig::default();
        let a = serde_json::to_string(&generate_scenario(&cfg, 42).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_scenario(&cfg, 42).unwrap()).unwrap();
        let c = serde_json::to_string(&generate_scenario(&cfg, 43).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_configs_rejected() {
        let cfg = GenerationConfig { people: 2, febrile: 3, ..Default::default() };
        assert!(matches!(generate_scenario(&cfg, 0), Err(SimError::InvalidConfig(_))));
        let cfg = GenerationConfig { frame_rate: 0.0, ..Default::default() };
        assert!(generate_scenario(&cfg, 0).is_err());
        let mut cfg = GenerationConfig::default();
        cfg.geometry.baseline = 0.0;
        assert!(generate_scenario(&cfg, 0).is_err());
    }

    #[test]
    fn scenario_json_round_trips() {
        let s = generate_scenario(&GenerationConfig::default(), 3).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
