//! Report writers. All floats are rendered with 17 significant digits so that
//! reports round-trip bit-exactly and repeated runs produce identical bytes.

use crate::run::{CliError, ExperimentOutcome};
use mmlab_core::scheme::Trajectory;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Scientific notation with 16 fractional digits: enough to reconstruct any
/// f64 exactly.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W: Write + ?Sized>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// JSON with deterministic float rendering.
pub fn to_json_string(value: &impl Serialize) -> Result<String, CliError> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Io(format!("serializing report: {e}")))?;
    String::from_utf8(out).map_err(|e| CliError::Io(format!("report is not UTF-8: {e}")))
}

fn trajectory_csv(trajectories: &[Trajectory]) -> Result<String, CliError> {
    let dim = trajectories
        .first()
        .map(|tr| tr.initial.dim())
        .ok_or_else(|| CliError::Io("no trajectories to write".into()))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["tau".to_string(), "step".to_string(), "time".to_string()];
    for i in 0..dim {
        header.push(format!("x{i}"));
    }
    header.push("speed".into());
    header.push("energy".into());
    w.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
    for tr in trajectories {
        for n in 0..=tr.n_steps() {
            let mut rec = vec![
                format_float(tr.tau),
                n.to_string(),
                format_float(n as f64 * tr.tau),
            ];
            for &c in tr.point(n).coords() {
                rec.push(format_float(c));
            }
            rec.push(format_float(if n == 0 { 0.0 } else { tr.step_speeds[n - 1] }));
            rec.push(format_float(if n == 0 {
                tr.initial_energy
            } else {
                tr.energies[n - 1]
            }));
            w.write_record(&rec).map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

/// Writes trajectories.csv, probes.json and summary.json into `dir`.
pub fn write_outputs(dir: &Path, outcome: &ExperimentOutcome) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
    let write = |name: &str, contents: &str| {
        let path = dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
    };
    write("trajectories.csv", &trajectory_csv(&outcome.trajectories)?)?;
    write("probes.json", &to_json_string(&outcome.report.probes)?)?;
    write("summary.json", &to_json_string(&outcome.report)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips_exactly() {
        for &x in &[
            0.1,
            -3.0,
            1.0 / 3.0,
            std::f64::consts::PI,
            2.2250738585072014e-308,
            1.7976931348623157e308,
            0.0,
        ] {
            let s = format_float(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
    }

    #[test]
    fn json_floats_use_scientific_notation() {
        #[derive(Serialize)]
        struct S {
            v: f64,
        }
        let s = to_json_string(&S { v: 0.1 }).unwrap();
        assert_eq!(s, r#"{"v":1.0000000000000001e-1}"#);
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["v"].as_f64().unwrap().to_bits(), 0.1f64.to_bits());
    }
}
