//! Fixed-layout CSV and JSON artifacts.
//!
//! Every CSV gets its header even when it has no rows. Floats are written
//! in shortest round-trip form, so reading a file back gives the same bits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::beliefs::LtPoint;
use crate::error::Result;
use crate::induced::InducedModel;
use crate::magent::PhaseRecord;
use crate::qcore::{QTable, Trace, TransitionRecord};

pub const TRACE_HEADER: [&str; 5] = ["t", "s", "u", "c", "s_next"];
pub const QTABLE_HEADER: [&str; 4] = ["s", "u", "value", "visits"];
pub const ERRORS_HEADER: [&str; 2] = ["t", "sup_error"];
pub const INDUCED_COST_HEADER: [&str; 3] = ["s", "u", "c_star"];
pub const INDUCED_KERNEL_HEADER: [&str; 4] = ["s", "u", "s_next", "prob"];
pub const LT_HEADER: [&str; 3] = ["t", "L_t_estimate", "stderr"];
pub const PHASES_HEADER: [&str; 4] = ["k", "agent", "policy_id", "satisfied"];

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_trace(path: &Path, trace: &[TransitionRecord]) -> Result<()> {
    write_rows(
        path,
        &TRACE_HEADER,
        trace
            .iter()
            .map(|r| vec![r.t.to_string(), r.s.to_string(), r.u.to_string(), num(r.c), r.s_next.to_string()]),
    )
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(crate::Error::validation(
            path.display().to_string(),
            format!("trace header {header:?}, expected {TRACE_HEADER:?}"),
        ));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<TransitionRecord>, _>>()?)
}

pub fn write_qtable(path: &Path, q: &QTable) -> Result<()> {
    let rows = (0..q.n_states()).flat_map(|s| {
        (0..q.n_actions()).map(move |u| vec![s.to_string(), u.to_string(), num(q.value(s, u)), q.visits(s, u).to_string()])
    });
    write_rows(path, &QTABLE_HEADER, rows)
}

pub fn write_errors(path: &Path, curve: &[(u64, f64)]) -> Result<()> {
    write_rows(path, &ERRORS_HEADER, curve.iter().map(|(t, e)| vec![t.to_string(), num(*e)]))
}

/// Writes the cost and kernel tables of the pairs the model knows.
pub fn write_induced(cost_path: &Path, kernel_path: &Path, m: &InducedModel) -> Result<()> {
    let pairs = || (0..m.n_states()).flat_map(|s| (0..m.n_actions()).map(move |u| (s, u)));
    write_rows(
        cost_path,
        &INDUCED_COST_HEADER,
        pairs().filter_map(|(s, u)| m.c_star(s, u).map(|c| vec![s.to_string(), u.to_string(), num(c)])),
    )?;
    write_rows(
        kernel_path,
        &INDUCED_KERNEL_HEADER,
        pairs().flat_map(|(s, u)| {
            m.p_star(s, u)
                .unwrap_or(&[])
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(move |(s1, p)| vec![s.to_string(), u.to_string(), s1.to_string(), num(*p)])
                .collect::<Vec<_>>()
        }),
    )
}

pub fn write_lt_curve(path: &Path, curve: &[LtPoint]) -> Result<()> {
    write_rows(
        path,
        &LT_HEADER,
        curve.iter().map(|p| vec![p.t.to_string(), num(p.estimate), num(p.stderr)]),
    )
}

pub fn write_phases(path: &Path, records: &[PhaseRecord]) -> Result<()> {
    write_rows(
        path,
        &PHASES_HEADER,
        records.iter().map(|r| {
            vec![
                r.k.to_string(),
                r.agent.to_string(),
                r.policy_id.to_string(),
                r.satisfied.to_string(),
            ]
        }),
    )
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = vec![
            TransitionRecord { t: 0, s: 1, u: 0, c: 0.1 + 0.2, s_next: 0 },
            TransitionRecord { t: 1, s: 0, u: 1, c: 1e-300, s_next: 1 },
        ];
        write_trace(&path, &trace).unwrap();
        assert_eq!(read_trace(&path).unwrap(), trace);
    }

    #[test]
    fn empty_outputs_keep_their_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "t,s,u,c,s_next\n");
        assert!(read_trace(&path).unwrap().is_empty());
        let path = dir.path().join("errors.csv");
        write_errors(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "t,sup_error\n");
    }

    #[test]
    fn qtable_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.csv");
        let q = QTable::from_values(1, 2, vec![0.5, 2.0]).unwrap();
        write_qtable(&path, &q).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "s,u,value,visits\n0,0,0.5,0\n0,1,2.0,0\n");
    }
}
