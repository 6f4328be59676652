//! Per-step metrics and their CSV encoding.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One simulation step. Error norms without ground truth are NaN; event
/// flags describe the step that ended at `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub t: f64,
    pub tracking_error: f64,
    pub theta_error: f64,
    pub policy_error: f64,
    pub value_error: f64,
    pub reward_error: f64,
    pub control_error: f64,
    /// `‖W̃‖` over the whole IRL weight vector.
    pub weight_error: f64,
    pub theta_stack_min_eig: f64,
    pub policy_stack_min_eig: f64,
    pub irl_stack_min_eig: f64,
    pub policy_gain_min_eig: f64,
    pub theta_generation: u64,
    pub policy_generation: u64,
    pub irl_active: bool,
    pub purged: bool,
    pub theta_gain_reset: bool,
    pub policy_gain_reset: bool,
    pub irl_gain_reset: bool,
}

const HEADER: &str = "t,tracking_error,theta_error,policy_error,value_error,reward_error,\
control_error,weight_error,theta_stack_min_eig,policy_stack_min_eig,irl_stack_min_eig,\
policy_gain_min_eig,theta_generation,policy_generation,irl_active,purged,theta_gain_reset,\
policy_gain_reset,irl_gain_reset";

/// Writes the header and one line per record. Floats use 17 significant
/// digits in scientific notation so the output is exact and reproducible.
pub fn write_csv<W: Write>(records: &[MetricsRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in records {
        let floats = [
            r.t,
            r.tracking_error,
            r.theta_error,
            r.policy_error,
            r.value_error,
            r.reward_error,
            r.control_error,
            r.weight_error,
            r.theta_stack_min_eig,
            r.policy_stack_min_eig,
            r.irl_stack_min_eig,
            r.policy_gain_min_eig,
        ];
        for v in floats {
            write!(out, "{v:.16e},")?;
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.theta_generation,
            r.policy_generation,
            u8::from(r.irl_active),
            u8::from(r.purged),
            u8::from(r.theta_gain_reset),
            u8::from(r.policy_gain_reset),
            u8::from(r.irl_gain_reset)
        )?;
    }
    out.flush()
}

pub fn emit_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io)?;
    write_csv(records, BufWriter::new(file)).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64) -> MetricsRecord {
        MetricsRecord {
            t,
            tracking_error: 0.1,
            theta_error: 1.0 / 3.0,
            policy_error: f64::NAN,
            value_error: 0.0,
            reward_error: 0.0,
            control_error: 0.0,
            weight_error: 0.0,
            theta_stack_min_eig: 0.0,
            policy_stack_min_eig: 0.0,
            irl_stack_min_eig: 0.0,
            policy_gain_min_eig: 1.0,
            theta_generation: 3,
            policy_generation: 0,
            irl_active: true,
            purged: false,
            theta_gain_reset: false,
            policy_gain_reset: false,
            irl_gain_reset: true,
        }
    }

    #[test]
    fn empty_metrics_write_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{HEADER}\n"));
    }

    #[test]
    fn floats_round_trip_exactly() {
        let mut buf = Vec::new();
        write_csv(&[record(0.005)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), HEADER.split(',').count());
        assert_eq!(fields[0].parse::<f64>().unwrap(), 0.005);
        assert_eq!(fields[2].parse::<f64>().unwrap(), 1.0 / 3.0);
        assert_eq!(fields[3], "NaN");
        assert_eq!(&fields[12..], &["3", "0", "1", "0", "0", "0", "1"]);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn unwritable_path_reports_path() {
        let err = emit_csv(&[], Path::new("/nonexistent-dir/metrics.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/metrics.csv"));
    }
}
