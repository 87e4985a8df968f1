//! Synthetic LTE reports driven by a synthetic radar rainfall series.
//!
//! Each record's received power follows a log-distance law around its
//! serving station, reduced by the attenuation shift of the station's local
//! rainfall class, an optional per-station per-window bias ("antenna
//! dampness") and zero-mean Gaussian noise, then rounded half away from
//! zero. The outdoor flag is Bernoulli with a class-dependent probability, so
//! the outdoor proportion also tracks rainfall.

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LteRecord, Operator, Rat, RSRP_RANGE, SINR_RANGE};
use crate::error::{Error, Result};
use crate::geodata::{BoundingBox, CellSize, GeoPoint, LabelBinning, RadarGrid, haversine_km};

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarSynthConfig {
    pub cell_deg: f64,
    /// Extra grid border around the station extent, degrees.
    pub margin_deg: f64,
    /// Rainfall at the top of the highest class, mm per window.
    pub rain_max_mm: f64,
    /// Peak spatial deviation inside one window, as a fraction of a class width.
    pub spatial_amplitude: f64,
}

impl Default for RadarSynthConfig {
    fn default() -> Self {
        RadarSynthConfig {
            cell_deg: 0.01,
            margin_deg: 0.02,
            rain_max_mm: 10.0,
            spatial_amplitude: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub m_stations: usize,
    /// Reports per station per window.
    pub users_per_station: usize,
    pub windows: usize,
    pub window_secs: i64,
    pub start: DateTime<Utc>,
    pub class_count: usize,
    /// Rain attenuation per class, dB; nondecreasing.
    pub class_shift_db: Vec<f64>,
    /// Outdoor probability per class; nonincreasing.
    pub class_outdoor_prob: Vec<f64>,
    pub noise_sigma_db: f64,
    /// Standard deviation of the per-station, per-window RSSI bias, dB.
    pub localized_noise_db: f64,
    pub seed: u64,
    pub extent: BoundingBox,
    pub station_min_separation_km: f64,
    /// Users are placed uniformly over the annulus [min, max] around their station.
    pub user_radius_m: [f64; 2],
    pub ref_rssi_dbm: f64,
    pub ref_distance_m: f64,
    pub path_loss_exponent: f64,
    /// RSRP = RSSI - 10 log10(12 * resource_blocks).
    pub resource_blocks: u32,
    pub interference_dbm: f64,
    pub sinr_sigma_db: f64,
    /// Share of reports tagged 5G SA.
    pub nr5g_fraction: f64,
    pub radar: RadarSynthConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            m_stations: 100,
            users_per_station: 150,
            windows: 20,
            window_secs: 1800,
            start: "2022-10-03T00:00:00Z".parse().expect("valid literal"),
            class_count: 10,
            class_shift_db: linspace(0.0, 8.45, 10),
            class_outdoor_prob: linspace(0.75, 0.25, 10),
            noise_sigma_db: 2.0,
            localized_noise_db: 0.0,
            seed: 20221003,
            extent: BoundingBox::yanqing(),
            station_min_separation_km: 2.0,
            user_radius_m: [100.0, 250.0],
            ref_rssi_dbm: -60.0,
            ref_distance_m: 100.0,
            path_loss_exponent: 3.5,
            resource_blocks: 50,
            interference_dbm: -85.0,
            sinr_sigma_db: 2.0,
            nr5g_fraction: 0.2,
            radar: RadarSynthConfig::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        let r = self.class_count;
        if r < 2 {
            return bad(format!("class_count must be >= 2, got {r}"));
        }
        if self.class_shift_db.len() != r || self.class_outdoor_prob.len() != r {
            return bad(format!(
                "class lists must have length {r}: shifts {}, outdoor {}",
                self.class_shift_db.len(),
                self.class_outdoor_prob.len()
            ));
        }
        if self.class_shift_db.windows(2).any(|w| w[1] < w[0]) || self.class_shift_db.iter().any(|v| !v.is_finite()) {
            return bad("class_shift_db must be finite and nondecreasing".into());
        }
        if self.class_outdoor_prob.iter().any(|p| !(0.0..=1.0).contains(p))
            || self.class_outdoor_prob.windows(2).any(|w| w[1] > w[0])
        {
            return bad("class_outdoor_prob must lie in [0, 1] and be nonincreasing".into());
        }
        if self.m_stations == 0 || self.users_per_station == 0 || self.windows == 0 || self.window_secs <= 0 {
            return bad("station, user, window counts and window length must be positive".into());
        }
        if !(self.noise_sigma_db >= 0.0 && self.localized_noise_db >= 0.0 && self.sinr_sigma_db >= 0.0) {
            return bad("noise standard deviations must be >= 0".into());
        }
        let [rmin, rmax] = self.user_radius_m;
        if !(rmin > 0.0 && rmin <= rmax) {
            return bad(format!("user_radius_m must satisfy 0 < min <= max, got {:?}", self.user_radius_m));
        }
        if !(0.0..=1.0).contains(&self.nr5g_fraction) {
            return bad("nr5g_fraction must lie in [0, 1]".into());
        }
        if !(self.radar.cell_deg > 0.0 && self.radar.margin_deg >= 0.0 && self.radar.rain_max_mm > 0.0) {
            return bad("radar cell size, margin and rain maximum must be positive".into());
        }
        if !(0.0..0.5).contains(&self.radar.spatial_amplitude) {
            return bad("radar spatial_amplitude must lie in [0, 0.5)".into());
        }
        self.extent.validate()
    }

    fn rsrp_offset_db(&self) -> f64 {
        10.0 * (12.0 * self.resource_blocks as f64).log10()
    }

    pub fn window_start(&self, w: usize) -> DateTime<Utc> {
        self.start + chrono::Duration::seconds(self.window_secs * w as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRow {
    pub id: u64,
    pub station: usize,
    pub window: usize,
    pub class: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub records: Vec<LteRecord>,
    /// One row per record, same order.
    pub truth: Vec<TruthRow>,
    pub stations: Vec<GeoPoint>,
    pub binning: LabelBinning,
}

/// Radar series over the station extent: window `t` rains at the center of a
/// class chosen by a seeded permutation cycle, plus a smooth spatial ripple.
pub fn synthesize_radar(cfg: &SynthConfig) -> Result<Vec<RadarGrid>> {
    cfg.validate()?;
    let rc = &cfg.radar;
    let e = cfg.extent;
    let origin = GeoPoint::new(e.min_lat - rc.margin_deg, e.min_lon - rc.margin_deg)?;
    let rows = ((e.max_lat - e.min_lat + 2.0 * rc.margin_deg) / rc.cell_deg).ceil() as usize;
    let cols = ((e.max_lon - e.min_lon + 2.0 * rc.margin_deg) / rc.cell_deg).ceil() as usize;
    let r = cfg.class_count;
    let width = rc.rain_max_mm / r as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let mut perm: Vec<usize> = (0..r).collect();
    perm.shuffle(&mut rng);

    (0..cfg.windows)
        .map(|t| {
            let class = perm[t % r];
            let level = (class as f64 + 0.5) * width;
            let (fa, fb, p1, p2): (f64, f64, f64, f64) =
                (rng.random_range(0.5..1.5), rng.random_range(0.5..1.5), rng.random(), rng.random());
            let mut values = Vec::with_capacity(rows * cols);
            for i in 0..rows {
                for j in 0..cols {
                    let u = i as f64 / rows as f64;
                    let v = j as f64 / cols as f64;
                    let ripple = 0.5 * (std::f64::consts::TAU * (fa * u + 0.3 * v + p1)).sin()
                        + 0.5 * (std::f64::consts::TAU * (fb * v - 0.2 * u + p2)).cos();
                    values.push((level + rc.spatial_amplitude * width * ripple).max(0.0));
                }
            }
            RadarGrid::new(
                origin,
                CellSize {
                    lat: rc.cell_deg,
                    lon: rc.cell_deg,
                },
                rows,
                cols,
                cfg.window_start(t),
                values,
            )
        })
        .collect()
}

fn place_stations(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<Vec<GeoPoint>> {
    let e = cfg.extent;
    // Keep every user annulus inside the extent.
    let pad_lat = (cfg.user_radius_m[1] / 1000.0 / crate::geodata::EARTH_RADIUS_KM).to_degrees();
    let pad_lon = pad_lat / e.max_lat.abs().max(e.min_lat.abs()).to_radians().cos();
    let mut out: Vec<GeoPoint> = Vec::with_capacity(cfg.m_stations);
    let mut attempts = 0usize;
    while out.len() < cfg.m_stations {
        attempts += 1;
        if attempts > 1000 * cfg.m_stations {
            return Err(Error::InvalidInput(format!(
                "could not place {} stations {} km apart inside {:?}",
                cfg.m_stations, cfg.station_min_separation_km, e
            )));
        }
        let p = GeoPoint::new(
            rng.random_range(e.min_lat + pad_lat..e.max_lat - pad_lat),
            rng.random_range(e.min_lon + pad_lon..e.max_lon - pad_lon),
        )?;
        if out.iter().all(|q| haversine_km(p, *q) >= cfg.station_min_separation_km) {
            out.push(p);
        }
    }
    Ok(out)
}

struct Draft {
    rec: LteRecord,
    station: usize,
    window: usize,
    class: usize,
}

/// Generate reports for every station and window of `rain_truth`.
///
/// Stations are generated independently, each from its own ChaCha stream of
/// the master seed, so the output does not depend on thread scheduling.
pub fn synthesize_dataset(cfg: &SynthConfig, rain_truth: &[RadarGrid]) -> Result<SyntheticDataset> {
    cfg.validate()?;
    if rain_truth.len() < cfg.windows {
        return Err(Error::InvalidInput(format!(
            "radar series has {} windows, config needs {}",
            rain_truth.len(),
            cfg.windows
        )));
    }
    let grids = &rain_truth[..cfg.windows];
    for (w, g) in grids.iter().enumerate() {
        if !g.bounds().contains_box(&cfg.extent) {
            return Err(Error::OutOfRange(format!(
                "radar window {w} bounds {:?} do not cover extent {:?}",
                g.bounds(),
                cfg.extent
            )));
        }
    }
    let binning = LabelBinning::fit(grids.iter().flat_map(|g| g.values().iter().copied()), cfg.class_count)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stations = place_stations(cfg, &mut rng)?;

    let per_station: Vec<Vec<Draft>> = stations
        .par_iter()
        .enumerate()
        .map(|(s, &center)| station_records(cfg, grids, &binning, s, center))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut truth = Vec::new();
    for (id, d) in per_station.into_iter().flatten().enumerate() {
        let mut rec = d.rec;
        rec.id = id as u64;
        truth.push(TruthRow {
            id: rec.id,
            station: d.station,
            window: d.window,
            class: d.class,
        });
        records.push(rec);
    }
    Ok(SyntheticDataset {
        records,
        truth,
        stations,
        binning,
    })
}

fn station_records(
    cfg: &SynthConfig,
    grids: &[RadarGrid],
    binning: &LabelBinning,
    s: usize,
    center: GeoPoint,
) -> Result<Vec<Draft>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(s as u64 + 1);
    let noise = Normal::new(0.0, cfg.noise_sigma_db).expect("sigma validated");
    let bias = Normal::new(0.0, cfg.localized_noise_db).expect("sigma validated");
    let sinr_noise = Normal::new(0.0, cfg.sinr_sigma_db).expect("sigma validated");
    let offset = cfg.rsrp_offset_db();
    let [rmin, rmax] = cfg.user_radius_m;

    let mut out = Vec::with_capacity(cfg.windows * cfg.users_per_station);
    for (w, grid) in grids.iter().enumerate() {
        let class = binning.bin(grid.interpolate(center)?)?;
        let shift = cfg.class_shift_db[class];
        let p_out = cfg.class_outdoor_prob[class];
        let station_bias = bias.sample(&mut rng);
        let t0 = grid.window_start().timestamp();
        for _ in 0..cfg.users_per_station {
            let d = (rng.random_range(0.0..=1.0) * (rmax * rmax - rmin * rmin) + rmin * rmin).sqrt();
            let bearing: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let loc = center.offset_m(d * bearing.cos(), d * bearing.sin())?;
            let timestamp = t0 + rng.random_range(0..cfg.window_secs);
            let outdoor = rng.random_bool(p_out);
            let rat = if rng.random_bool(cfg.nr5g_fraction) { Rat::Nr5gSa } else { Rat::Lte4g };
            let operator = Operator::ALL[rng.random_range(0..Operator::ALL.len())];
            let rssi_db = cfg.ref_rssi_dbm - 10.0 * cfg.path_loss_exponent * (d / cfg.ref_distance_m).log10()
                - shift
                - station_bias
                + noise.sample(&mut rng);
            let rsrp = ((rssi_db - offset).round() as i32).clamp(RSRP_RANGE.0, RSRP_RANGE.1);
            // Saturated RSRP can exceed a very weak RSSI; the report keeps RSSI >= RSRP.
            let rssi = (rssi_db.round() as i32).max(rsrp);
            let sinr = ((rssi_db - cfg.interference_dbm + sinr_noise.sample(&mut rng)).round() as i32)
                .clamp(SINR_RANGE.0, SINR_RANGE.1);
            out.push(Draft {
                rec: LteRecord {
                    id: 0,
                    loc,
                    rat,
                    operator,
                    rsrp,
                    sinr,
                    rssi,
                    outdoor,
                    timestamp,
                },
                station: s,
                window: w,
                class,
            });
        }
    }
    Ok(out)
}
