//! LTE downlink measurement reports: validation, CSV I/O and a calibrated
//! synthetic generator.
//!
//! CSV schema (header required, exact column order):
//!
//! | column      | type                                   |
//! |-------------|----------------------------------------|
//! | `id`        | unsigned integer, unique               |
//! | `timestamp` | ISO-8601 UTC, e.g. `2022-10-03T00:12:00Z` |
//! | `lat`,`lon` | degrees                                |
//! | `rat`       | `4G` or `5G_SA`                        |
//! | `operator`  | `CMCC`, `CUCC`, `CTCC` or `CBN`        |
//! | `rsrp`      | integer dBm in [-156, -31]             |
//! | `sinr`      | integer dB in [-23, 40]                |
//! | `rssi`      | integer dBm, >= `rsrp`                 |
//! | `outdoor`   | `1` outdoor, `0` indoor                |

mod synth;

pub use synth::{
    synthesize_dataset, synthesize_radar, RadarSynthConfig, SynthConfig, SyntheticDataset, TruthRow,
};

use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::GeoPoint;

/// 3GPP RSRP reporting range, dBm.
pub const RSRP_RANGE: (i32, i32) = (-156, -31);
/// 3GPP SINR reporting range, dB.
pub const SINR_RANGE: (i32, i32) = (-23, 40);

pub const CSV_HEADER: [&str; 10] = [
    "id", "timestamp", "lat", "lon", "rat", "operator", "rsrp", "sinr", "rssi", "outdoor",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rat {
    #[serde(rename = "4G")]
    Lte4g,
    #[serde(rename = "5G_SA")]
    Nr5gSa,
}

impl Rat {
    fn as_str(self) -> &'static str {
        match self {
            Rat::Lte4g => "4G",
            Rat::Nr5gSa => "5G_SA",
        }
    }
    fn parse(s: &str) -> Option<Self> {
        match s {
            "4G" => Some(Rat::Lte4g),
            "5G_SA" => Some(Rat::Nr5gSa),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    ChinaMobile,
    ChinaUnicom,
    ChinaTelecom,
    ChinaBroadnet,
}

impl Operator {
    pub const ALL: [Operator; 4] = [
        Operator::ChinaMobile,
        Operator::ChinaUnicom,
        Operator::ChinaTelecom,
        Operator::ChinaBroadnet,
    ];

    fn as_str(self) -> &'static str {
        match self {
            Operator::ChinaMobile => "CMCC",
            Operator::ChinaUnicom => "CUCC",
            Operator::ChinaTelecom => "CTCC",
            Operator::ChinaBroadnet => "CBN",
        }
    }
    fn parse(s: &str) -> Option<Self> {
        Operator::ALL.into_iter().find(|o| o.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LteRecord {
    pub id: u64,
    pub loc: GeoPoint,
    pub rat: Rat,
    pub operator: Operator,
    pub rsrp: i32,
    pub sinr: i32,
    pub rssi: i32,
    pub outdoor: bool,
    /// Unix seconds.
    pub timestamp: i64,
}

impl LteRecord {
    pub fn validate(&self) -> Result<()> {
        if !(RSRP_RANGE.0..=RSRP_RANGE.1).contains(&self.rsrp) {
            return Err(Error::OutOfRange(format!("rsrp {} outside {:?}", self.rsrp, RSRP_RANGE)));
        }
        if !(SINR_RANGE.0..=SINR_RANGE.1).contains(&self.sinr) {
            return Err(Error::OutOfRange(format!("sinr {} outside {:?}", self.sinr, SINR_RANGE)));
        }
        if self.rssi < self.rsrp {
            return Err(Error::OutOfRange(format!("rssi {} below rsrp {}", self.rssi, self.rsrp)));
        }
        Ok(())
    }
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .expect("timestamp in chrono range")
        .to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    DateTime::parse_from_rfc3339(s).ok().map(|t| t.timestamp())
}

/// Read and validate an LTE report CSV.
pub fn parse_lte_csv(path: &Path) -> Result<Vec<LteRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let perr = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let header = rdr.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(perr(1, format!("header {:?} does not match {:?}", header.iter().collect::<Vec<_>>(), CSV_HEADER)));
    }
    let mut out = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for row in rdr.records() {
        let row = row.map_err(|e| perr(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        let bad = |i: usize, what: &str| perr(line, format!("field `{}`: {what} ({:?})", CSV_HEADER[i], field(i)));
        let int = |i: usize| field(i).trim().parse::<i32>().map_err(|_| bad(i, "not an integer"));
        let float = |i: usize| {
            field(i)
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(i, "not a finite number"))
        };
        let id = field(0).trim().parse::<u64>().map_err(|_| bad(0, "not an unsigned integer"))?;
        let timestamp = parse_timestamp(field(1).trim()).ok_or_else(|| bad(1, "not an ISO-8601 timestamp"))?;
        let loc = GeoPoint::new(float(2)?, float(3)?).map_err(|e| perr(line, e.to_string()))?;
        let rat = Rat::parse(field(4).trim()).ok_or_else(|| bad(4, "unknown RAT"))?;
        let operator = Operator::parse(field(5).trim()).ok_or_else(|| bad(5, "unknown operator"))?;
        let outdoor = match field(9).trim() {
            "1" => true,
            "0" => false,
            _ => return Err(bad(9, "expected 0 or 1")),
        };
        let rec = LteRecord {
            id,
            loc,
            rat,
            operator,
            rsrp: int(6)?,
            sinr: int(7)?,
            rssi: int(8)?,
            outdoor,
            timestamp,
        };
        rec.validate().map_err(|e| perr(line, format!("record {id}: {e}")))?;
        if !ids.insert(id) {
            return Err(perr(line, format!("duplicate id {id}")));
        }
        out.push(rec);
    }
    log::info!("parsed {} LTE records from {}", out.len(), path.display());
    Ok(out)
}

pub fn write_lte_csv(path: &Path, records: &[LteRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let ioerr = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(ioerr)?;
    for r in records {
        w.write_record(&[
            r.id.to_string(),
            format_timestamp(r.timestamp),
            r.loc.lat().to_string(),
            r.loc.lon().to_string(),
            r.rat.as_str().to_string(),
            r.operator.as_str().to_string(),
            r.rsrp.to_string(),
            r.sinr.to_string(),
            r.rssi.to_string(),
            if r.outdoor { "1" } else { "0" }.to_string(),
        ])
        .map_err(ioerr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Ground-truth sidecar: `id,station,window,class`.
pub fn write_truth_csv(path: &Path, rows: &[TruthRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = String::from("id,station,window,class\n");
    for t in rows {
        body.push_str(&format!("{},{},{},{}\n", t.id, t.station, t.window, t.class));
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<TruthRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "id,station,window,class")) => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                msg: "bad truth header".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let p: Vec<&str> = l.split(',').collect();
            let parsed = (p.len() == 4)
                .then(|| Some((p[0].parse().ok()?, p[1].parse().ok()?, p[2].parse().ok()?, p[3].parse().ok()?)))
                .flatten();
            parsed
                .map(|(id, station, window, class)| TruthRow {
                    id,
                    station,
                    window,
                    class,
                })
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    msg: format!("malformed truth row {l:?}"),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,timestamp,lat,lon,rat,operator,rsrp,sinr,rssi,outdoor\n";

    fn write(dir: &Path, body: &str) -> std::path::PathBuf {
        let p = dir.join("lte.csv");
        std::fs::write(&p, format!("{HEADER}{body}")).unwrap();
        p
    }

    #[test]
    fn empty_body_gives_no_records() {
        let dir = tempfile::tempdir().unwrap();
        assert!(parse_lte_csv(&write(dir.path(), "")).unwrap().is_empty());
    }

    #[test]
    fn parses_valid_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "1,2022-10-03T00:01:00Z,40.4,116.0,4G,CMCC,-95,12,-67,1\n2,2022-10-03T00:02:00Z,40.41,116.01,5G_SA,CBN,-100,3,-72,0\n",
        );
        let recs = parse_lte_csv(&p).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].rat, Rat::Nr5gSa);
        assert!(!recs[1].outdoor);
        assert_eq!(format_timestamp(recs[0].timestamp), "2022-10-03T00:01:00Z");
    }

    #[test]
    fn rssi_below_rsrp_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "1,2022-10-03T00:01:00Z,40.4,116.0,4G,CMCC,-95,12,-67,1\n2,2022-10-03T00:02:00Z,40.4,116.0,4G,CMCC,-95,12,-99,1\n",
        );
        match parse_lte_csv(&p).unwrap_err() {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 3);
                assert!(msg.contains("rssi"), "{msg}");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn malformed_fields_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        for (row, needle) in [
            ("1,2022-10-03T00:01:00Z,40.4,116.0,4G,CMCC,abc,12,-67,1", "rsrp"),
            ("1,yesterday,40.4,116.0,4G,CMCC,-95,12,-67,1", "timestamp"),
            ("1,2022-10-03T00:01:00Z,40.4,116.0,3G,CMCC,-95,12,-67,1", "rat"),
            ("1,2022-10-03T00:01:00Z,40.4,116.0,4G,CMCC,-20,12,-10,1", "rsrp"),
            ("1,2022-10-03T00:01:00Z,40.4,116.0,4G,CMCC,-95,12,-67,2", "outdoor"),
            ("1,2022-10-03T00:01:00Z,95.0,116.0,4G,CMCC,-95,12,-67,1", "latitude"),
        ] {
            let err = parse_lte_csv(&write(dir.path(), &format!("{row}\n"))).unwrap_err();
            let s = err.to_string();
            assert!(s.contains("line 2") && s.contains(needle), "{s}");
        }
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "id,lat,lon\n").unwrap();
        assert!(matches!(parse_lte_csv(&p), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_lte_csv(&dir.path().join("nope.csv")), Err(Error::MissingInput(_))));
    }
}
