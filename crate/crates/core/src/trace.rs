//! Trace CSV format.
//!
//! Two `#` comment lines carry the run metadata and limits, then a header
//! row and one row per record. Angles are radians, torques N·m, forces N,
//! `V` in J. Column order, for `n` joints:
//!
//! ```text
//! t_s, q{i}_rad, q_dot{i}_rad_s, q_ref{i}_rad, xi{i}, xi_err{i}, xi_err_dot{i}_1_s,
//! tau_raw{i}_nm, tau{i}_nm, saturated, force_x_n, force_y_n,
//! v_j, v_dot_numeric_j_s, v_dot_analytic_j_s, margin{i}_rad, status
//! ```
//!
//! Undefined values are written as `NaN`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::parametrization::JointLimits;
use crate::simulation::SimTrace;

pub fn header(n: usize) -> Vec<String> {
    let per_joint = |prefix: &str, suffix: &str| -> Vec<String> {
        (1..=n).map(|i| format!("{prefix}{i}{suffix}")).collect()
    };
    let mut cols = vec!["t_s".to_string()];
    cols.extend(per_joint("q", "_rad"));
    cols.extend(per_joint("q_dot", "_rad_s"));
    cols.extend(per_joint("q_ref", "_rad"));
    cols.extend(per_joint("xi", ""));
    cols.extend(per_joint("xi_err", ""));
    cols.extend(per_joint("xi_err_dot", "_1_s"));
    cols.extend(per_joint("tau_raw", "_nm"));
    cols.extend(per_joint("tau", "_nm"));
    cols.extend(["saturated", "force_x_n", "force_y_n", "v_j", "v_dot_numeric_j_s", "v_dot_analytic_j_s"].map(String::from));
    cols.extend(per_joint("margin", "_rad"));
    cols.push("status".into());
    cols
}

fn join(xs: impl Iterator<Item = f64>) -> String {
    xs.map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

pub fn write_csv<W: Write>(trace: &SimTrace, limits: &JointLimits, writer: W) -> Result<()> {
    let mut out = BufWriter::new(writer);
    writeln!(out, "# jla trace; law={}; dt={}", trace.law, trace.dt)?;
    writeln!(
        out,
        "# q_min_rad={}; q_max_rad={}",
        join(limits.q_min().iter().copied()),
        join(limits.q_max().iter().copied())
    )?;
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(header(limits.n()))?;
    for r in &trace.records {
        let mut row: Vec<String> = vec![format!("{}", r.t)];
        for v in [&r.q, &r.q_dot, &r.q_ref, &r.xi, &r.xi_err, &r.xi_err_dot, &r.tau_raw, &r.tau] {
            row.extend(v.iter().map(|x| format!("{x}")));
        }
        row.push(r.saturated.to_string());
        row.extend([r.force[0], r.force[1], r.v, r.v_dot_numeric, r.v_dot_analytic].map(|x| format!("{x}")));
        row.extend(r.margin.iter().map(|x| format!("{x}")));
        row.push(r.status.name().to_string());
        csv.write_record(&row)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn save_csv(trace: &SimTrace, limits: &JointLimits, path: &Path) -> Result<()> {
    write_csv(trace, limits, File::create(path)?)
}

/// A trace read back from CSV, numeric columns only.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceTable {
    pub law: String,
    pub dt: f64,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub header: Vec<String>,
    /// Row-major numeric values; booleans become 0/1, `status` is NaN.
    pub rows: Vec<Vec<f64>>,
}

impl TraceTable {
    pub fn n_joints(&self) -> usize {
        self.q_min.len()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(File::open(path)?)
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut buf = BufReader::new(reader);
        let mut meta = String::new();
        let mut limits = String::new();
        buf.read_line(&mut meta)?;
        buf.read_line(&mut limits)?;
        let bad = |what: &str| Error::Io(format!("malformed trace metadata: {what}"));
        let field = |line: &str, key: &str| -> Option<String> {
            line.trim_start_matches('#')
                .split(';')
                .map(str::trim)
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')).map(str::to_string))
        };
        let law = field(&meta, "law").ok_or_else(|| bad("law"))?;
        let dt = field(&meta, "dt")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("dt"))?;
        let parse_list = |key: &str| -> Result<Vec<f64>> {
            field(&limits, key)
                .ok_or_else(|| bad(key))?
                .split_whitespace()
                .map(|x| x.parse::<f64>().map_err(|_| bad(key)))
                .collect()
        };
        let q_min = parse_list("q_min_rad")?;
        let q_max = parse_list("q_max_rad")?;
        let mut csv = csv::Reader::from_reader(buf);
        let header: Vec<String> = csv.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for record in csv.records() {
            let record = record?;
            rows.push(
                record
                    .iter()
                    .map(|s| match s {
                        "true" => 1.0,
                        "false" => 0.0,
                        other => other.parse().unwrap_or(f64::NAN),
                    })
                    .collect(),
            );
        }
        Ok(Self {
            law,
            dt,
            q_min,
            q_max,
            header,
            rows,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::simulation::run;

    #[test]
    fn header_width_matches_rows() {
        let mut cfg = ExperimentConfig::load("exp1_setpoint").unwrap().to_sim_config().unwrap();
        cfg.duration = 0.01;
        let trace = run(&cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&trace, &cfg.limits, &mut buf).unwrap();
        let table = TraceTable::read(buf.as_slice()).unwrap();
        assert_eq!(table.header.len(), header(2).len());
        assert_eq!(table.rows.len(), trace.records.len());
        assert!(table.rows.iter().all(|r| r.len() == table.header.len()));
        assert_eq!(table.q_min, cfg.limits.q_min().as_slice());
        assert_eq!(table.law, "proposed");
        // shortest round-trip formatting keeps values bit-exact
        let q1 = table.column("q1_rad").unwrap();
        assert!(q1.iter().zip(&trace.records).all(|(a, r)| *a == r.q[0]));
    }

    #[test]
    fn rejects_missing_metadata() {
        assert!(TraceTable::read("t_s\n0\n".as_bytes()).is_err());
    }
}
