//! Coverage-constrained transmit-power minimisation for one macro and a set
//! of micro stations, with and without rain attenuation.
//!
//! Powers are chosen in dBm; totals are compared in watts,
//! `W = 10^((dBm - 30) / 10)`. A station that serves nobody is switched off
//! and contributes 0 W.

mod pathloss;
mod water;

pub use pathloss::{PathLossModel, Scenario, MIN_DISTANCE_M};
pub use water::{water_attenuation_length, water_permittivity};

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    30.0 + 10.0 * w.log10()
}

/// Exhaustive search is used while `stations^users` stays below this.
pub const EXACT_SEARCH_LIMIT: f64 = 2e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub area_km: f64,
    pub micro_count: usize,
    pub users: usize,
    pub fc_ghz: f64,
    pub user_height_m: f64,
    pub macro_height_m: f64,
    pub micro_height_m: f64,
    /// Minimum received power `R`, dBm.
    pub coverage_dbm: f64,
    pub macro_max_dbm: f64,
    pub micro_max_dbm: f64,
    pub rain_mean_db: f64,
    pub rain_sigma_db: f64,
    pub shadow_fading: bool,
    pub seed: u64,
    /// Layout seeds for the multi-seed savings summary.
    pub layout_seeds: Vec<u64>,
    pub pr_rain: Vec<f64>,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        EnergyConfig {
            area_km: 1.0,
            micro_count: 20,
            users: 200,
            fc_ghz: 3.4,
            user_height_m: 1.5,
            macro_height_m: 25.0,
            micro_height_m: 10.0,
            coverage_dbm: -110.0,
            macro_max_dbm: 53.0,
            micro_max_dbm: 38.0,
            rain_mean_db: 9.0,
            rain_sigma_db: 1.0,
            shadow_fading: true,
            seed: 20221003,
            layout_seeds: (0..10).collect(),
            pr_rain: (0..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

impl EnergyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.area_km > 0.0 && self.area_km.is_finite()) {
            return bad(format!("area_km must be positive, got {}", self.area_km));
        }
        if self.users == 0 {
            return bad("users must be >= 1".into());
        }
        if !(self.fc_ghz > 0.5 && self.fc_ghz <= 100.0) {
            return bad(format!("fc_ghz must lie in (0.5, 100], got {}", self.fc_ghz));
        }
        if !(self.user_height_m > 1.0 && self.user_height_m <= 13.0) {
            return bad(format!("user_height_m must lie in (1, 13], got {}", self.user_height_m));
        }
        if self.macro_height_m <= self.user_height_m || self.micro_height_m <= self.user_height_m {
            return bad("station heights must exceed the user height".into());
        }
        if !(self.rain_sigma_db >= 0.0 && self.rain_mean_db.is_finite()) {
            return bad("rain attenuation mean must be finite and sigma >= 0".into());
        }
        if let Some(p) = self.pr_rain.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("rain probability {p} outside [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationKind {
    Macro,
    Micro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub kind: StationKind,
    /// Metres from the south-west corner of the area.
    pub pos: [f64; 2],
    pub height_m: f64,
    pub max_dbm: f64,
}

/// A laid-out case study: stations, users and every random draw.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyScenario {
    pub coverage_dbm: f64,
    /// Macro first.
    pub stations: Vec<Station>,
    pub users: Vec<[f64; 2]>,
    /// Clear-sky path loss including shadow fading, `[station][user]`, dB.
    pub path_loss_db: Vec<Vec<f64>>,
    /// Rain attenuation per station, dB.
    pub rain_db: Vec<f64>,
}

impl EnergyScenario {
    /// Macro at the centre, micros and users uniform over the square. Layout,
    /// shadow fading and rain use separate streams of `seed`.
    pub fn generate(cfg: &EnergyConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let side = cfg.area_km * 1000.0;
        let mut layout = ChaCha8Rng::seed_from_u64(seed);
        let mut point = || [layout.random_range(0.0..side), layout.random_range(0.0..side)];
        let mut stations = vec![Station {
            kind: StationKind::Macro,
            pos: [side / 2.0, side / 2.0],
            height_m: cfg.macro_height_m,
            max_dbm: cfg.macro_max_dbm,
        }];
        for _ in 0..cfg.micro_count {
            stations.push(Station {
                kind: StationKind::Micro,
                pos: point(),
                height_m: cfg.micro_height_m,
                max_dbm: cfg.micro_max_dbm,
            });
        }
        let users: Vec<[f64; 2]> = (0..cfg.users).map(|_| point()).collect();

        let mut shadow = ChaCha8Rng::seed_from_u64(seed);
        shadow.set_stream(1);
        let mut path_loss_db = Vec::with_capacity(stations.len());
        for s in &stations {
            let model = PathLossModel {
                scenario: match s.kind {
                    StationKind::Macro => Scenario::UMa,
                    StationKind::Micro => Scenario::UMi,
                },
                fc_ghz: cfg.fc_ghz,
                h_bs: s.height_m,
                h_ut: cfg.user_height_m,
            };
            let row = users
                .iter()
                .map(|u| {
                    let d = (s.pos[0] - u[0]).hypot(s.pos[1] - u[1]).max(1e-3);
                    let z: f64 = StandardNormal.sample(&mut shadow);
                    let fading = if cfg.shadow_fading { z * model.shadow_sigma(d) } else { 0.0 };
                    Ok(model.expected(d)? + fading)
                })
                .collect::<Result<Vec<_>>>()?;
            path_loss_db.push(row);
        }

        let mut rain = ChaCha8Rng::seed_from_u64(seed);
        rain.set_stream(2);
        let law = Normal::new(cfg.rain_mean_db, cfg.rain_sigma_db).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let rain_db = stations.iter().map(|_| law.sample(&mut rain)).collect();
        Ok(EnergyScenario {
            coverage_dbm: cfg.coverage_dbm,
            stations,
            users,
            path_loss_db,
            rain_db,
        })
    }

    /// Transmit power station `s` needs to reach user `u`, dBm.
    pub fn requirement(&self, s: usize, u: usize, rain: bool) -> f64 {
        let extra = if rain { self.rain_db[s] } else { 0.0 };
        self.coverage_dbm + self.path_loss_db[s][u] + extra
    }

    fn requirements(&self, mode: Weather) -> Vec<Vec<f64>> {
        (0..self.stations.len())
            .map(|s| {
                (0..self.users.len())
                    .map(|u| match mode {
                        Weather::Clear => self.requirement(s, u, false),
                        Weather::Rain => self.requirement(s, u, true),
                        Weather::Both => self.requirement(s, u, false).max(self.requirement(s, u, true)),
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Weather {
    Clear,
    Rain,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Transmit power per station, dBm; `None` when switched off.
    pub power_dbm: Vec<Option<f64>>,
    /// Serving station per user.
    pub serving: Vec<usize>,
    pub total_w: f64,
    pub method: Method,
}

impl Allocation {
    fn from_levels(power_dbm: Vec<Option<f64>>, req: &[Vec<f64>], method: Method) -> Self {
        let users = req.first().map_or(0, Vec::len);
        let serving = (0..users)
            .map(|u| {
                (0..req.len())
                    .filter(|&s| power_dbm[s].is_some_and(|p| p >= req[s][u]))
                    .min_by(|&a, &b| req[a][u].total_cmp(&req[b][u]).then(a.cmp(&b)))
                    .expect("allocation covers every user")
            })
            .collect();
        let total_w = power_dbm.iter().flatten().map(|&p| dbm_to_watts(p)).sum();
        Allocation {
            power_dbm,
            serving,
            total_w,
            method,
        }
    }

    pub fn active_stations(&self) -> usize {
        self.power_dbm.iter().flatten().count()
    }

    /// Lowest margin over users of the best received power above `R`, dB.
    pub fn min_margin_db(&self, scenario: &EnergyScenario, rain: bool) -> f64 {
        (0..scenario.users.len())
            .map(|u| {
                self.power_dbm
                    .iter()
                    .enumerate()
                    .filter_map(|(s, p)| p.map(|p| p - scenario.requirement(s, u, rain)))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_feasible(scenario: &EnergyScenario, req: &[Vec<f64>]) -> Result<()> {
    let bad: Vec<usize> = (0..scenario.users.len())
        .filter(|&u| (0..req.len()).all(|s| req[s][u] > scenario.stations[s].max_dbm))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Infeasible(format!("users {bad:?} cannot be covered by any station at maximum power")))
    }
}

/// Each user to its cheapest station, then every station lowered to what
/// only it must provide, until nothing changes.
// `req` is station-major, so user loops index the inner dimension.
#[allow(clippy::needless_range_loop)]
fn heuristic(scenario: &EnergyScenario, req: &[Vec<f64>]) -> Vec<Option<f64>> {
    let ns = req.len();
    let nu = scenario.users.len();
    let mut level: Vec<Option<f64>> = vec![None; ns];
    for u in 0..nu {
        let s = (0..ns)
            .filter(|&s| req[s][u] <= scenario.stations[s].max_dbm)
            .min_by(|&a, &b| req[a][u].total_cmp(&req[b][u]).then(a.cmp(&b)))
            .expect("feasibility checked");
        level[s] = Some(level[s].map_or(req[s][u], |p: f64| p.max(req[s][u])));
    }
    loop {
        let mut changed = false;
        // Most expensive first, so the largest savings are claimed first.
        let mut order: Vec<usize> = (0..ns).filter(|&s| level[s].is_some()).collect();
        order.sort_by(|&a, &b| level[b].unwrap().total_cmp(&level[a].unwrap()).then(a.cmp(&b)));
        for s in order {
            let needed = (0..nu)
                .filter(|&u| !(0..ns).any(|t| t != s && level[t].is_some_and(|p| p >= req[t][u])))
                .map(|u| req[s][u])
                .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
            if needed != level[s] {
                debug_assert!(needed.is_none_or(|n| n <= level[s].unwrap()));
                level[s] = needed;
                changed = true;
            }
        }
        if !changed {
            return level;
        }
    }
}

/// Branch and bound over user-to-station assignments.
fn exact(scenario: &EnergyScenario, req: &[Vec<f64>]) -> Vec<Option<f64>> {
    struct Search<'a> {
        req: &'a [Vec<f64>],
        options: Vec<Vec<usize>>,
        level: Vec<Option<f64>>,
        best: Option<(f64, Vec<Option<f64>>)>,
    }
    impl Search<'_> {
        fn total(&self) -> f64 {
            self.level.iter().flatten().map(|&p| dbm_to_watts(p)).sum()
        }
        fn go(&mut self, u: usize) {
            let total = self.total();
            if self.best.as_ref().is_some_and(|b| total >= b.0) {
                return;
            }
            if u == self.options.len() {
                self.best = Some((total, self.level.clone()));
                return;
            }
            for i in 0..self.options[u].len() {
                let s = self.options[u][i];
                let prev = self.level[s];
                let r = self.req[s][u];
                self.level[s] = Some(prev.map_or(r, |p| p.max(r)));
                self.go(u + 1);
                self.level[s] = prev;
            }
        }
    }
    let ns = req.len();
    let options = (0..scenario.users.len())
        .map(|u| {
            let mut o: Vec<usize> = (0..ns).filter(|&s| req[s][u] <= scenario.stations[s].max_dbm).collect();
            o.sort_by(|&a, &b| req[a][u].total_cmp(&req[b][u]).then(a.cmp(&b)));
            o
        })
        .collect();
    let mut search = Search {
        req,
        options,
        level: vec![None; ns],
        best: None,
    };
    search.go(0);
    search.best.expect("feasibility checked").1
}

fn solve(scenario: &EnergyScenario, req: &[Vec<f64>]) -> Result<Allocation> {
    check_feasible(scenario, req)?;
    let space = (scenario.stations.len() as f64).powi(scenario.users.len().min(1000) as i32);
    let (levels, method) = if space <= EXACT_SEARCH_LIMIT {
        (exact(scenario, req), Method::Exact)
    } else {
        (heuristic(scenario, req), Method::Heuristic)
    };
    Ok(Allocation::from_levels(levels, req, method))
}

/// `P_w^{c1}` (rain) or `P_w^{c2}` (clear): cheapest allocation covering every
/// user in one scenario.
pub fn min_power_single(scenario: &EnergyScenario, rain: bool) -> Result<Allocation> {
    let weather = if rain { Weather::Rain } else { Weather::Clear };
    let own = solve(scenario, &scenario.requirements(weather))?;
    // The robust allocation also satisfies this scenario; never return worse.
    let robust = min_power_robust(scenario)?;
    if robust.total_w < own.total_w {
        let req = scenario.requirements(weather);
        Ok(Allocation::from_levels(robust.power_dbm, &req, robust.method))
    } else {
        Ok(own)
    }
}

/// `P_wo`: one allocation covering every user in both scenarios.
pub fn min_power_robust(scenario: &EnergyScenario) -> Result<Allocation> {
    solve(scenario, &scenario.requirements(Weather::Both))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub pr_rain: f64,
    /// `Pr_rain P^{c1} + (1 - Pr_rain) P^{c2}`, watts.
    pub p_w: f64,
    pub p_wo: f64,
    /// `(P_wo - P_w) / P_wo`.
    pub savings: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTotals {
    pub rain: Allocation,
    pub clear: Allocation,
    pub robust: Allocation,
}

impl EnergyTotals {
    pub fn solve(scenario: &EnergyScenario) -> Result<Self> {
        Ok(EnergyTotals {
            rain: min_power_single(scenario, true)?,
            clear: min_power_single(scenario, false)?,
            robust: min_power_robust(scenario)?,
        })
    }

    pub fn expected_energy(&self, pr_rain: f64) -> Result<EnergyPoint> {
        if !(0.0..=1.0).contains(&pr_rain) {
            return Err(Error::OutOfRange(format!("rain probability {pr_rain} outside [0, 1]")));
        }
        let p_w = self.rain.total_w * pr_rain + self.clear.total_w * (1.0 - pr_rain);
        let p_wo = self.robust.total_w;
        Ok(EnergyPoint {
            pr_rain,
            p_w,
            p_wo,
            savings: (p_wo - p_w) / p_wo,
        })
    }
}

pub fn expected_energy(scenario: &EnergyScenario, pr_rain: f64) -> Result<EnergyPoint> {
    EnergyTotals::solve(scenario)?.expected_energy(pr_rain)
}

/// `pr_rain,p_w_watts,p_wo_watts,savings`
pub fn write_savings_csv(path: &Path, points: &[EnergyPoint]) -> Result<()> {
    let mut out = String::from("pr_rain,p_w_watts,p_wo_watts,savings\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.pr_rain, p.p_w, p.p_wo, p.savings);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One row per scenario: totals, active stations, macro load and coverage margin.
pub fn write_coverage_csv(path: &Path, scenario: &EnergyScenario, totals: &EnergyTotals) -> Result<()> {
    let mut out = String::from("scenario,total_watts,total_dbm,active_stations,macro_dbm,macro_users,min_margin_db,method\n");
    let rows = [
        ("rain", &totals.rain, true),
        ("clear", &totals.clear, false),
        ("robust_rain", &totals.robust, true),
        ("robust_clear", &totals.robust, false),
    ];
    for (name, a, rain) in rows {
        let macro_users = a.serving.iter().filter(|&&s| s == 0).count();
        let macro_dbm = a.power_dbm[0].map(|p| p.to_string()).unwrap_or_else(|| "off".into());
        let method = match a.method {
            Method::Exact => "exact",
            Method::Heuristic => "heuristic",
        };
        let _ = writeln!(
            out,
            "{name},{},{},{},{macro_dbm},{macro_users},{},{method}",
            a.total_w,
            watts_to_dbm(a.total_w),
            a.active_stations(),
            a.min_margin_db(scenario, rain)
        );
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(micros: usize, users: usize) -> EnergyConfig {
        EnergyConfig {
            area_km: 0.3,
            micro_count: micros,
            users,
            ..EnergyConfig::default()
        }
    }

    /// Cheapest total over every user-to-station assignment.
    fn brute_force(scenario: &EnergyScenario, rain: Option<bool>) -> f64 {
        let ns = scenario.stations.len();
        let nu = scenario.users.len();
        let need = |s: usize, u: usize| match rain {
            Some(r) => scenario.requirement(s, u, r),
            None => scenario.requirement(s, u, false).max(scenario.requirement(s, u, true)),
        };
        let mut best = f64::INFINITY;
        let mut assign = vec![0usize; nu];
        loop {
            let mut level = vec![f64::NEG_INFINITY; ns];
            let mut ok = true;
            for (u, &s) in assign.iter().enumerate() {
                let r = need(s, u);
                if r > scenario.stations[s].max_dbm {
                    ok = false;
                    break;
                }
                level[s] = level[s].max(r);
            }
            if ok {
                let total: f64 = level.iter().filter(|p| p.is_finite()).map(|&p| dbm_to_watts(p)).sum();
                best = best.min(total);
            }
            let mut i = 0;
            loop {
                if i == nu {
                    return best;
                }
                assign[i] += 1;
                if assign[i] < ns {
                    break;
                }
                assign[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn conversions() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-15);
        assert!((dbm_to_watts(53.0) - 199.526).abs() < 1e-3);
        assert!((watts_to_dbm(dbm_to_watts(-47.3)) + 47.3).abs() < 1e-12);
    }

    #[test]
    fn single_station_single_user() {
        let sc = EnergyScenario::generate(&small_cfg(0, 1), 3).unwrap();
        let a = min_power_single(&sc, false).unwrap();
        let want = sc.coverage_dbm + sc.path_loss_db[0][0];
        assert_eq!(a.power_dbm, vec![Some(want)]);
        assert!((a.total_w - dbm_to_watts(want)).abs() < 1e-18);
    }

    #[test]
    fn small_instances_match_brute_force() {
        for seed in 0..30 {
            let sc = EnergyScenario::generate(&small_cfg(2, 5), seed).unwrap();
            for rain in [false, true] {
                let a = min_power_single(&sc, rain).unwrap();
                assert_eq!(a.method, Method::Exact);
                let want = brute_force(&sc, Some(rain));
                assert!((a.total_w - want).abs() <= 1e-12 * want, "seed {seed}: {} vs {want}", a.total_w);
            }
            let r = min_power_robust(&sc).unwrap();
            let want = brute_force(&sc, None);
            assert!((r.total_w - want).abs() <= 1e-12 * want);
        }
    }

    #[test]
    fn dominance_and_coverage_at_full_scale() {
        let cfg = EnergyConfig::default();
        for seed in 0..3 {
            let sc = EnergyScenario::generate(&cfg, seed).unwrap();
            let t = EnergyTotals::solve(&sc).unwrap();
            assert_eq!(t.robust.method, Method::Heuristic);
            assert!(t.clear.total_w <= t.robust.total_w);
            assert!(t.rain.total_w <= t.robust.total_w);
            assert!(t.clear.total_w <= t.rain.total_w);
            assert!(t.rain.min_margin_db(&sc, true) >= -1e-9);
            assert!(t.clear.min_margin_db(&sc, false) >= -1e-9);
            assert!(t.robust.min_margin_db(&sc, true) >= -1e-9);
            assert!(t.robust.min_margin_db(&sc, false) >= -1e-9);
            for (s, p) in t.robust.power_dbm.iter().enumerate() {
                if let Some(p) = p {
                    assert!(*p <= sc.stations[s].max_dbm + 1e-12);
                }
            }
        }
    }

    #[test]
    fn rain_toggle_adds_station_draw() {
        let sc = EnergyScenario::generate(&EnergyConfig::default(), 5).unwrap();
        for s in 0..sc.stations.len() {
            let d = sc.requirement(s, 7, true) - sc.requirement(s, 7, false);
            assert!((d - sc.rain_db[s]).abs() < 1e-12);
        }
        let mean = sc.rain_db.iter().sum::<f64>() / sc.rain_db.len() as f64;
        assert!((mean - 9.0).abs() < 1.0);
    }

    #[test]
    fn zero_rain_makes_robust_equal_clear() {
        let cfg = EnergyConfig {
            rain_mean_db: 0.0,
            rain_sigma_db: 0.0,
            ..EnergyConfig::default()
        };
        let sc = EnergyScenario::generate(&cfg, 1).unwrap();
        let t = EnergyTotals::solve(&sc).unwrap();
        assert_eq!(t.robust.total_w, t.clear.total_w);
    }

    #[test]
    fn expected_energy_is_affine() {
        let sc = EnergyScenario::generate(&small_cfg(3, 20), 2).unwrap();
        let t = EnergyTotals::solve(&sc).unwrap();
        let p0 = t.expected_energy(0.0).unwrap();
        assert_eq!(p0.p_w, t.clear.total_w);
        let p1 = t.expected_energy(1.0).unwrap();
        let mid = t.expected_energy(0.3).unwrap();
        let line = 0.7 * p0.p_w + 0.3 * p1.p_w;
        assert!((mid.p_w - line).abs() <= 1e-9 * line);
        assert!(p0.savings >= mid.savings && mid.savings >= p1.savings);
        assert!(t.expected_energy(1.5).is_err());
    }

    #[test]
    fn infeasible_users_are_listed() {
        let cfg = EnergyConfig {
            coverage_dbm: 0.0,
            ..small_cfg(1, 3)
        };
        let sc = EnergyScenario::generate(&cfg, 0).unwrap();
        let err = min_power_single(&sc, false).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
        assert!(err.to_string().contains("[0, 1, 2]"), "{err}");
    }

    #[test]
    fn deterministic_under_seed() {
        let a = EnergyScenario::generate(&EnergyConfig::default(), 4).unwrap();
        let b = EnergyScenario::generate(&EnergyConfig::default(), 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(EnergyTotals::solve(&a).unwrap(), EnergyTotals::solve(&b).unwrap());
    }
}
