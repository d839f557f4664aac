//! Text formats: sequences, tabulated pulses, population traces, sweep
//! curves and fidelity histories. Every writer has a matching reader.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::propagation::{EvolutionTrace, PulseShape, Trit, TritSequence, TRACE_LEVELS};
use crate::robustness::SweepResult;
use crate::{Error, Result};

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { line, reason: reason.into() }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    parse_err(line, e.to_string())
}

fn io_err(e: std::io::Error) -> Error {
    parse_err(0, e.to_string())
}

/// Parses a sequence: `+-0` characters, or `1, -1, 0` separated by commas
/// or whitespace.
/// Blank lines and `#` comments are skipped; several lines are concatenated.
pub fn parse_sequence(text: &str, f_clock: f64) -> Result<TritSequence> {
    let mut symbols = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        // '1' never appears in the `+-0` form, so a lone "1" or "-1" is numeric.
        if line.contains(',') || line.contains('1') {
            for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
                let v: i64 = tok.parse().map_err(|_| parse_err(n + 1, format!("{tok:?} is not an integer")))?;
                symbols.push(Trit::from_value(v).ok_or_else(|| parse_err(n + 1, format!("{v} is not a trit")))?);
            }
        } else {
            for c in line.chars().filter(|c| !c.is_whitespace()) {
                symbols.push(Trit::from_char(c).ok_or_else(|| parse_err(n + 1, format!("unexpected character {c:?}")))?);
            }
        }
    }
    if symbols.is_empty() {
        return Err(parse_err(0, "no symbols found"));
    }
    TritSequence::new(symbols, f_clock)
}

pub fn read_sequence(mut r: impl Read, f_clock: f64) -> Result<TritSequence> {
    let mut text = String::new();
    r.read_to_string(&mut text).map_err(io_err)?;
    parse_sequence(&text, f_clock)
}

pub fn write_sequence(mut w: impl Write, seq: &TritSequence) -> std::io::Result<()> {
    writeln!(w, "{seq}")
}

#[derive(Serialize, Deserialize)]
struct PulseRow {
    time_ns: f64,
    amplitude: f64,
}

/// Reads a `time_ns,amplitude` waveform into a tabulated shape (validated).
pub fn read_tabulated(r: impl Read) -> Result<PulseShape> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(r);
    let samples = rdr
        .deserialize::<PulseRow>()
        .map(|row| row.map(|r| (r.time_ns, r.amplitude)).map_err(csv_err))
        .collect::<Result<Vec<_>>>()?;
    let shape = PulseShape::Tabulated { samples };
    shape.validate()?;
    Ok(shape)
}

pub fn write_tabulated(w: impl Write, samples: &[(f64, f64)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for &(time_ns, amplitude) in samples {
        wtr.serialize(PulseRow { time_ns, amplitude }).map_err(csv_err)?;
    }
    wtr.flush().map_err(io_err)
}

/// Population trace as `t_ns,W0,...,W5`.
pub fn write_trace(w: impl Write, trace: &EvolutionTrace) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["t_ns".to_string()];
    header.extend((0..TRACE_LEVELS).map(|m| format!("W{m}")));
    wtr.write_record(&header).map_err(csv_err)?;
    for (t, pops) in trace.times.iter().zip(&trace.populations) {
        let mut row = vec![t.to_string()];
        row.extend((0..TRACE_LEVELS).map(|m| pops.get(m).copied().unwrap_or(0.0).to_string()));
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(io_err)
}

/// `(times, W0..W5 rows)` from a trace CSV.
pub fn read_trace(r: impl Read) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("t_ns") || header.len() != TRACE_LEVELS + 1 {
        return Err(parse_err(1, "expected header t_ns,W0,...,W5"));
    }
    let (mut times, mut pops) = (Vec::new(), Vec::new());
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(n + 2, format!("{s:?} is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        times.push(vals[0]);
        pops.push(vals[1..].to_vec());
    }
    Ok((times, pops))
}

#[derive(Serialize, Deserialize)]
struct SweepRow {
    param_value: f64,
    infidelity: f64,
}

pub fn write_sweep(w: impl Write, result: &SweepResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (&param_value, &infidelity) in result.grid.iter().zip(&result.infidelity) {
        wtr.serialize(SweepRow { param_value, infidelity }).map_err(csv_err)?;
    }
    wtr.flush().map_err(io_err)
}

pub fn read_sweep(r: impl Read) -> Result<Vec<(f64, f64)>> {
    csv::Reader::from_reader(r)
        .deserialize::<SweepRow>()
        .map(|row| row.map(|r| (r.param_value, r.infidelity)).map_err(csv_err))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct HistoryRow {
    generation: usize,
    fidelity: f64,
}

pub fn write_history(w: impl Write, history: &[f64]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for (generation, &fidelity) in history.iter().enumerate() {
        wtr.serialize(HistoryRow { generation, fidelity }).map_err(csv_err)?;
    }
    wtr.flush().map_err(io_err)
}

pub fn read_history(r: impl Read) -> Result<Vec<f64>> {
    csv::Reader::from_reader(r)
        .deserialize::<HistoryRow>()
        .map(|row| row.map(|r| r.fidelity).map_err(csv_err))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct WaveRow {
    t_ns: f64,
    signal: f64,
    threshold: f64,
}

/// Seed preview as `t_ns,signal,threshold`.
pub fn write_seed_waveform(w: impl Write, rows: &[(f64, f64, f64)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for &(t_ns, signal, threshold) in rows {
        wtr.serialize(WaveRow { t_ns, signal, threshold }).map_err(csv_err)?;
    }
    wtr.flush().map_err(io_err)
}

pub fn read_seed_waveform(r: impl Read) -> Result<Vec<(f64, f64, f64)>> {
    csv::Reader::from_reader(r)
        .deserialize::<WaveRow>()
        .map(|row| row.map(|r| (r.t_ns, r.signal, r.threshold)).map_err(csv_err))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagation::PopulationBasis;
    use crate::linalg::CVector;
    use crate::robustness::SweepParam;

    #[test]
    fn sequence_forms() {
        let a = parse_sequence("0++++0----\n", 50.0).unwrap();
        let b = parse_sequence("0, 1, 1, 1, 1, 0, -1, -1, -1, -1", 50.0).unwrap();
        assert_eq!(a, b);
        let c = parse_sequence("# header\n0++++\n0----  # tail\n", 50.0).unwrap();
        assert_eq!(a, c);
        assert!(matches!(parse_sequence("0+x", 1.0), Err(Error::Parse { line: 1, .. })));
        assert!(parse_sequence("1, 2", 1.0).is_err());
        assert_eq!(parse_sequence("-1", 1.0).unwrap().symbols(), &[Trit::Minus]);
        assert_eq!(parse_sequence("1 0 -1", 1.0).unwrap().to_string(), "+0-");
        assert!(parse_sequence("\n# nothing\n", 1.0).is_err());
        let mut out = Vec::new();
        write_sequence(&mut out, &a).unwrap();
        assert_eq!(read_sequence(&out[..], 50.0).unwrap(), a);
    }

    #[test]
    fn tabulated_round_trip() {
        let samples = vec![(0.0, 0.0), (0.001, 1.0), (0.002, 0.5), (0.003, 0.0)];
        let mut buf = Vec::new();
        write_tabulated(&mut buf, &samples).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("time_ns,amplitude\n"));
        assert_eq!(read_tabulated(&buf[..]).unwrap(), PulseShape::Tabulated { samples });
        assert!(read_tabulated("time_ns,amplitude\n0,1\nx,2\n".as_bytes()).is_err());
        assert!(read_tabulated("time_ns,amplitude\n".as_bytes()).is_err());
    }

    #[test]
    fn trace_round_trip() {
        let trace = EvolutionTrace {
            times: vec![0.0, 0.04],
            populations: vec![vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], vec![0.5, 0.49, 0.01, 0.0, 0.0, 0.0, 0.0]],
            basis: PopulationBasis::Eigen,
            final_state: CVector::zeros(7),
            final_unitary: None,
        };
        let mut buf = Vec::new();
        write_trace(&mut buf, &trace).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t_ns,W0,W1,W2,W3,W4,W5\n"));
        let (t, p) = read_trace(&buf[..]).unwrap();
        assert_eq!(t, trace.times);
        assert_eq!(p[1], trace.populations[1][..6].to_vec());
    }

    #[test]
    fn sweep_and_history_round_trip() {
        let r = SweepResult {
            parameter: SweepParam::Mu,
            grid: vec![0.2, 0.25, 0.3],
            infidelity: vec![1e-3, 4.2e-5, 2e-4],
            center_infidelity: 4.2e-5,
            window: None,
        };
        let mut buf = Vec::new();
        write_sweep(&mut buf, &r).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("param_value,infidelity\n"));
        assert_eq!(read_sweep(&buf[..]).unwrap(), vec![(0.2, 1e-3), (0.25, 4.2e-5), (0.3, 2e-4)]);
        let h = vec![0.98, 0.999, 0.99995];
        let mut buf = Vec::new();
        write_history(&mut buf, &h).unwrap();
        assert_eq!(read_history(&buf[..]).unwrap(), h);
        let wave = vec![(0.0, -0.052, 0.026), (0.01, 0.0123, 0.026)];
        let mut buf = Vec::new();
        write_seed_waveform(&mut buf, &wave).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t_ns,signal,threshold\n"));
        assert_eq!(read_seed_waveform(&buf[..]).unwrap(), wave);
    }
}
