//! Scenario synthesis: network geometry, channel gains, content popularity
//! and per-user requests.
//!
//! Base stations are indexed satellites first (`0..num_satellites`) then
//! terrestrial stations. Terrestrial links use log-distance pathloss with
//! Rayleigh fading and lognormal shadowing; satellite links use free-space
//! pathloss at the slant range with shadowed-Rician fading. All randomness is
//! drawn from per-component substreams of one master seed, so e.g. changing
//! the satellite fading parameters never shifts the terrestrial draws.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{self, STREAM_POSITIONS, STREAM_REQUESTS, STREAM_SATELLITE, STREAM_TERRESTRIAL};

pub const EARTH_RADIUS_KM: f64 = 6371.0;
const PLACEMENT_MAX_TRIES: usize = 10_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario argument: {0}")]
    InvalidArgument(String),
}

/// Shadowed-Rician fading parameters for the satellite links.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SatFadingParams {
    /// Half the average power of the scattered component.
    pub b: f64,
    /// Nakagami fading severity of the line-of-sight component.
    pub m: f64,
    /// Average power of the line-of-sight component.
    pub omega: f64,
}

impl Default for SatFadingParams {
    fn default() -> Self {
        Self { b: 0.126, m: 10.1, omega: 0.835 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub num_users: usize,
    pub num_satellites: usize,
    pub num_tbs: usize,
    pub num_contents: usize,
    /// Size of each content item, megabits.
    pub content_size_mbit: f64,
    /// Cache capacity per base station, megabits.
    pub cache_capacity_mbit: f64,
    /// Bandwidth of one resource block, Hz.
    pub bandwidth_per_block_hz: f64,
    /// Resource blocks available per base station (association capacity).
    pub max_blocks: usize,
    pub tbs_power_max_dbm: f64,
    pub sat_power_max_dbm: f64,
    /// Lower transmit-power box bound per served user, dBm.
    pub per_user_power_min_dbm: f64,
    /// Upper transmit-power box bound per served user, dBm.
    pub per_user_power_max_dbm: f64,
    pub noise_density_dbm_per_hz: f64,
    pub carrier_freq_ghz: f64,
    pub sat_altitude_km: f64,
    pub elevation_deg: f64,
    pub pathloss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub zipf_kappa: f64,
    /// Backhaul discount λ: cache hits deliver full rate, misses λ × rate.
    pub tradeoff_lambda: f64,
    pub area_side_m: f64,
    pub tbs_exclusion_radius_m: f64,
    pub tbs_antenna_gain_dbi: f64,
    pub sat_antenna_gain_dbi: f64,
    /// Atmospheric, scintillation and polarization margins, dB.
    pub sat_extra_losses_db: f64,
    pub sat_fading: SatFadingParams,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            num_users: 10,
            num_satellites: 1,
            num_tbs: 1,
            num_contents: 5,
            content_size_mbit: 30.0,
            cache_capacity_mbit: 30.0,
            bandwidth_per_block_hz: 10.0e6,
            max_blocks: 10,
            tbs_power_max_dbm: 42.0,
            sat_power_max_dbm: 43.0,
            per_user_power_min_dbm: 10.0,
            per_user_power_max_dbm: 38.0,
            noise_density_dbm_per_hz: -174.0,
            carrier_freq_ghz: 2.0,
            sat_altitude_km: 1000.0,
            elevation_deg: 60.0,
            pathloss_exponent: 3.7,
            shadowing_sigma_db: 8.0,
            zipf_kappa: 0.7,
            tradeoff_lambda: 0.6,
            area_side_m: 1000.0,
            tbs_exclusion_radius_m: 50.0,
            tbs_antenna_gain_dbi: 10.0,
            sat_antenna_gain_dbi: 35.0,
            sat_extra_losses_db: 5.65,
            sat_fading: SatFadingParams::default(),
            rng_seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn num_bs(&self) -> usize {
        self.num_satellites + self.num_tbs
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: &str| Err(ScenarioError::InvalidArgument(msg.to_string()));
        if self.num_users == 0 {
            return bad("num_users must be positive");
        }
        if self.num_bs() == 0 {
            return bad("need at least one base station");
        }
        if self.num_contents == 0 {
            return bad("num_contents must be positive");
        }
        if !(self.content_size_mbit > 0.0) || !(self.cache_capacity_mbit >= 0.0) {
            return bad("content size must be positive and cache capacity non-negative");
        }
        if !(self.bandwidth_per_block_hz > 0.0) {
            return bad("bandwidth_per_block_hz must be positive");
        }
        if self.max_blocks == 0 {
            return bad("max_blocks must be positive");
        }
        if self.per_user_power_min_dbm > self.per_user_power_max_dbm {
            return bad("per-user power box is empty (min > max)");
        }
        if !(self.carrier_freq_ghz > 0.0) {
            return bad("carrier_freq_ghz must be positive");
        }
        if self.num_satellites > 0 && !(self.sat_altitude_km > 0.0) {
            return bad("sat_altitude_km must be positive");
        }
        if !(0.0..=90.0).contains(&self.elevation_deg) {
            return bad("elevation_deg must lie in [0, 90]");
        }
        if !(self.pathloss_exponent > 0.0) {
            return bad("pathloss_exponent must be positive");
        }
        if self.shadowing_sigma_db < 0.0 {
            return bad("shadowing_sigma_db must be non-negative");
        }
        if self.zipf_kappa < 0.0 {
            return bad("zipf_kappa must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.tradeoff_lambda) {
            return bad("tradeoff_lambda must lie in [0, 1]");
        }
        if !(self.area_side_m > 0.0) {
            return bad("area_side_m must be positive");
        }
        if self.num_tbs > 0 && !(self.tbs_exclusion_radius_m > 0.0) {
            return bad("tbs_exclusion_radius_m must be positive");
        }
        let f = &self.sat_fading;
        if f.b < 0.0 || f.omega < 0.0 || (f.omega > 0.0 && !(f.m > 0.0)) {
            return bad("sat_fading parameters must be non-negative (m positive when omega > 0)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Terrestrial,
    Satellite,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    /// Linear power gain, antenna gains and all losses folded in.
    pub gain: f64,
    pub distance_m: f64,
    pub kind: LinkKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub user_positions: Vec<[f64; 2]>,
    pub tbs_positions: Vec<[f64; 2]>,
    /// Link state per (user, base station).
    pub links: Array2<LinkState>,
    /// Requested content index per user, `0..num_contents`.
    pub requests: Vec<usize>,
    /// Zipf request probabilities, descending in content index.
    pub popularity: Vec<f64>,
    /// Receiver noise power over one resource block, watts.
    pub noise_w: f64,
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn w_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

/// Slant range (km) to a satellite at altitude `h_km` seen under elevation
/// `elev_deg`, from the law of cosines on the Earth-center triangle.
pub fn slant_range_km(h_km: f64, elev_deg: f64) -> f64 {
    let r = EARTH_RADIUS_KM;
    let s = elev_deg.to_radians().sin();
    (r * r * s * s + h_km * h_km + 2.0 * h_km * r).sqrt() - r * s
}

/// Free-space pathloss in dB for distance in km and frequency in GHz.
pub fn free_space_loss_db(d_km: f64, f_ghz: f64) -> f64 {
    92.44 + 20.0 * d_km.log10() + 20.0 * f_ghz.log10()
}

/// Zipf popularity profile: `p_f ∝ (f+1)^-kappa` over `0..n`, normalized.
pub fn zipf_popularity(n: usize, kappa: f64) -> Vec<f64> {
    let weights: Vec<f64> = (1..=n).map(|f| (f as f64).powf(-kappa)).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

fn rayleigh_power(rng: &mut ChaCha8Rng) -> f64 {
    Exp::new(1.0).unwrap().sample(rng)
}

fn lognormal_shadow(rng: &mut ChaCha8Rng, sigma_db: f64) -> f64 {
    let db = Normal::new(0.0, sigma_db).unwrap().sample(rng);
    10f64.powf(db / 10.0)
}

/// Squared envelope of a shadowed-Rician channel: Rayleigh scatter of mean
/// power `2b` plus a Nakagami line-of-sight component of mean power `omega`
/// and severity `m`, combined at a uniform phase offset.
fn shadowed_rician_power(rng: &mut ChaCha8Rng, p: &SatFadingParams) -> f64 {
    // Rayleigh amplitude via its squared envelope: A² ~ Exp with mean 2b
    let a = if p.b > 0.0 {
        let e: f64 = Exp::new(1.0).unwrap().sample(rng);
        (2.0 * p.b * e).sqrt()
    } else {
        0.0
    };
    let z = if p.omega > 0.0 {
        Gamma::new(p.m, p.omega / p.m).unwrap().sample(rng).sqrt()
    } else {
        0.0
    };
    let psi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    a * a + z * z + 2.0 * a * z * psi.cos()
}

fn place_tbs(config: &ScenarioConfig) -> Vec<[f64; 2]> {
    let side = config.area_side_m;
    let center = [side / 2.0, side / 2.0];
    match config.num_tbs {
        0 => Vec::new(),
        1 => vec![center],
        t => (0..t)
            .map(|k| {
                let angle = std::f64::consts::TAU * k as f64 / t as f64;
                [center[0] + side / 4.0 * angle.cos(), center[1] + side / 4.0 * angle.sin()]
            })
            .collect(),
    }
}

fn place_users(
    config: &ScenarioConfig,
    tbs: &[[f64; 2]],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<[f64; 2]>, ScenarioError> {
    let side = config.area_side_m;
    let min_d2 = config.tbs_exclusion_radius_m * config.tbs_exclusion_radius_m;
    let mut users = Vec::with_capacity(config.num_users);
    for n in 0..config.num_users {
        let mut placed = None;
        for _ in 0..PLACEMENT_MAX_TRIES {
            let cand = [rng.gen_range(0.0..side), rng.gen_range(0.0..side)];
            let clear = tbs.iter().all(|t| {
                let (dx, dy) = (cand[0] - t[0], cand[1] - t[1]);
                dx * dx + dy * dy >= min_d2
            });
            if clear {
                placed = Some(cand);
                break;
            }
        }
        match placed {
            Some(p) => users.push(p),
            None => {
                return Err(ScenarioError::InvalidArgument(format!(
                    "could not place user {n} outside the exclusion radius after {PLACEMENT_MAX_TRIES} tries"
                )))
            }
        }
    }
    Ok(users)
}

impl Scenario {
    /// Synthesize a scenario from the config, deterministically in
    /// `config.rng_seed`.
    pub fn generate(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let mut pos_rng = rng::stream(config.rng_seed, STREAM_POSITIONS);
        let tbs_positions = place_tbs(&config);
        let user_positions = place_users(&config, &tbs_positions, &mut pos_rng)?;

        let popularity = zipf_popularity(config.num_contents, config.zipf_kappa);
        let mut req_rng = rng::stream(config.rng_seed, STREAM_REQUESTS);
        let requests: Vec<usize> =
            (0..config.num_users).map(|_| sample_index(&popularity, &mut req_rng)).collect();

        let mut terr_rng = rng::stream(config.rng_seed, STREAM_TERRESTRIAL);
        let mut sat_rng = rng::stream(config.rng_seed, STREAM_SATELLITE);
        let slant_m = if config.num_satellites > 0 {
            slant_range_km(config.sat_altitude_km, config.elevation_deg) * 1e3
        } else {
            0.0
        };
        let sat_gain_lin = 10f64.powf(config.sat_antenna_gain_dbi / 10.0);
        let tbs_gain_lin = 10f64.powf(config.tbs_antenna_gain_dbi / 10.0);

        let m_total = config.num_bs();
        let mut links = Vec::with_capacity(config.num_users * m_total);
        for n in 0..config.num_users {
            for m in 0..m_total {
                if m < config.num_satellites {
                    let loss_db = free_space_loss_db(slant_m / 1e3, config.carrier_freq_ghz)
                        + config.sat_extra_losses_db;
                    let fading = shadowed_rician_power(&mut sat_rng, &config.sat_fading);
                    links.push(LinkState {
                        gain: sat_gain_lin * fading * 10f64.powf(-loss_db / 10.0),
                        distance_m: slant_m,
                        kind: LinkKind::Satellite,
                    });
                } else {
                    let t = &tbs_positions[m - config.num_satellites];
                    let (dx, dy) =
                        (user_positions[n][0] - t[0], user_positions[n][1] - t[1]);
                    let d = (dx * dx + dy * dy).sqrt();
                    let fading = rayleigh_power(&mut terr_rng);
                    let shadow = lognormal_shadow(&mut terr_rng, config.shadowing_sigma_db);
                    links.push(LinkState {
                        gain: tbs_gain_lin * fading * shadow * d.powf(-config.pathloss_exponent),
                        distance_m: d,
                        kind: LinkKind::Terrestrial,
                    });
                }
            }
        }
        let links = Array2::from_shape_vec((config.num_users, m_total), links)
            .expect("link matrix shape");

        let noise_w = dbm_to_w(
            config.noise_density_dbm_per_hz + 10.0 * config.bandwidth_per_block_hz.log10(),
        );

        Ok(Self { config, user_positions, tbs_positions, links, requests, popularity, noise_w })
    }

    pub fn num_users(&self) -> usize {
        self.config.num_users
    }

    pub fn num_bs(&self) -> usize {
        self.config.num_bs()
    }

    pub fn num_contents(&self) -> usize {
        self.config.num_contents
    }

    pub fn is_satellite(&self, m: usize) -> bool {
        m < self.config.num_satellites
    }

    pub fn gain(&self, n: usize, m: usize) -> f64 {
        self.links[[n, m]].gain
    }

    /// Total transmit-power budget of base station `m`, watts.
    pub fn bs_power_budget_w(&self, m: usize) -> f64 {
        if self.is_satellite(m) {
            dbm_to_w(self.config.sat_power_max_dbm)
        } else {
            dbm_to_w(self.config.tbs_power_max_dbm)
        }
    }

    pub fn user_power_min_w(&self) -> f64 {
        dbm_to_w(self.config.per_user_power_min_dbm)
    }

    pub fn user_power_max_w(&self) -> f64 {
        dbm_to_w(self.config.per_user_power_max_dbm)
    }

    /// Canonical JSON snapshot: object keys sorted, byte-identical across
    /// runs with equal config.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("scenario serializes");
        value.to_string()
    }
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
