//! Flight-log CSV files: `#` comment header with units and the expert
//! configuration, a mandatory column header, then one row per tick.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::labels::{ExpertConfig, FlightRecord};
use super::synth::ImuSample;

pub const LOG_FORMAT: &str = "neuroflap-flight-log";
pub const LOG_VERSION: u32 = 1;

pub const COLUMNS: [&str; 18] = [
    "timestamp", "gx", "gy", "gz", "ax", "ay", "az", "theta_ref", "psi_ref", "roll", "pitch",
    "pitch_filtered", "yaw", "yaw_rate", "o_theta", "o_psi", "pwm_l", "pwm_r",
];

const UNITS: &str = "timestamp s; gx gy gz rad/s; ax ay az m/s^2; theta_ref psi_ref roll pitch \
pitch_filtered yaw deg; yaw_rate deg/s; o_theta o_psi deg; pwm_l pwm_r us";

/// A demonstration log with the configuration that produced its labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FlightLog {
    pub config: ExpertConfig,
    /// Extra header entries (generator seed, scenario frequency, ...).
    pub meta: BTreeMap<String, String>,
    pub records: Vec<FlightRecord>,
}

impl FlightLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn imu(&self) -> Vec<ImuSample> {
        self.records.iter().map(|r| r.imu).collect()
    }

    pub fn theta_ref(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.theta_ref).collect()
    }

    pub fn psi_ref(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.psi_ref).collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::Format(format!("writing flight log: {e}"));
        writeln!(w, "# format: {LOG_FORMAT}").map_err(io)?;
        writeln!(w, "# version: {LOG_VERSION}").map_err(io)?;
        writeln!(w, "# units: {UNITS}").map_err(io)?;
        for (k, v) in self.config.to_pairs() {
            writeln!(w, "# {k}: {v}").map_err(io)?;
        }
        for (k, v) in &self.meta {
            writeln!(w, "# meta.{k}: {v}").map_err(io)?;
        }
        let mut csv = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Format(format!("writing flight log: {e}"));
        csv.write_record(COLUMNS).map_err(csv_err)?;
        for r in &self.records {
            let row = [
                r.imu.t,
                r.imu.gyro[0],
                r.imu.gyro[1],
                r.imu.gyro[2],
                r.imu.accel[0],
                r.imu.accel[1],
                r.imu.accel[2],
                r.theta_ref,
                r.psi_ref,
                r.roll,
                r.pitch,
                r.pitch_filtered,
                r.yaw,
                r.yaw_rate,
                r.o_theta,
                r.o_psi,
                r.pwm_l,
                r.pwm_r,
            ];
            csv.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        csv.flush().map_err(io)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut reader = BufReader::new(r);
        let mut header = BTreeMap::new();
        let mut text = String::new();
        // Comment block first; the remainder is handed to the CSV reader.
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader
                .read_line(&mut line)
                .map_err(|e| Error::Format(format!("reading flight log: {e}")))?;
            if n == 0 {
                break;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some((k, v)) = c.split_once(':') {
                    header.insert(k.trim().to_string(), v.trim().to_string());
                }
            } else {
                text.push_str(&line);
                break;
            }
        }
        reader
            .read_to_string(&mut text)
            .map_err(|e| Error::Format(format!("reading flight log: {e}")))?;

        match header.get("format") {
            Some(f) if f == LOG_FORMAT => {}
            other => return Err(Error::Format(format!("not a flight log (format {other:?})"))),
        }
        let version: u32 = header
            .get("version")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Format("flight log without version".into()))?;
        if version != LOG_VERSION {
            return Err(Error::Format(format!("unsupported flight log version {version}")));
        }
        let config = ExpertConfig::from_lookup(|k| header.get(k).cloned())?;
        let meta = header
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("meta.").map(|k| (k.to_string(), v.clone())))
            .collect();

        let mut csv = csv::ReaderBuilder::new()
            .has_headers(true)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let cols = csv
            .headers()
            .map_err(|e| Error::Format(format!("flight log header: {e}")))?
            .clone();
        if cols.iter().ne(COLUMNS.iter().copied()) {
            return Err(Error::Format(format!("unexpected flight log columns {cols:?}")));
        }
        let mut records = Vec::new();
        for (i, row) in csv.records().enumerate() {
            let row = row.map_err(|e| Error::Format(format!("flight log row {}: {e}", i + 1)))?;
            let mut v = [0.0f64; 18];
            if row.len() != v.len() {
                return Err(Error::Format(format!("flight log row {}: {} fields", i + 1, row.len())));
            }
            for (slot, field) in v.iter_mut().zip(row.iter()) {
                *slot = field.trim().parse().map_err(|_| {
                    Error::Format(format!("flight log row {}: bad number {field:?}", i + 1))
                })?;
            }
            records.push(FlightRecord {
                imu: ImuSample {
                    t: v[0],
                    gyro: [v[1], v[2], v[3]],
                    accel: [v[4], v[5], v[6]],
                },
                theta_ref: v[7],
                psi_ref: v[8],
                roll: v[9],
                pitch: v[10],
                pitch_filtered: v[11],
                yaw: v[12],
                yaw_rate: v[13],
                o_theta: v[14],
                o_psi: v[15],
                pwm_l: v[16],
                pwm_r: v[17],
            });
        }
        if records.windows(2).any(|w| !(w[1].imu.t > w[0].imu.t)) {
            return Err(Error::Format("flight log timestamps are not increasing".into()));
        }
        Ok(Self {
            config,
            meta,
            records,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// `*.csv` files of a directory in lexicographic order.
pub fn list_logs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    out.sort();
    Ok(out)
}

/// Load every log of a directory in lexicographic order.
pub fn load_logs(dir: &Path) -> Result<Vec<FlightLog>> {
    list_logs(dir)?.iter().map(|p| FlightLog::load(p)).collect()
}
