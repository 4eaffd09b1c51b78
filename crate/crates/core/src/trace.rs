//! CSV trace files.
//!
//! One row per recorded sample. Columns, in order:
//! `time_s, slot, df_a{j}…, pm_a{j}_r{i}…, pg_a{j}_r{i}…, u_a{j}_r{i}…,
//! lambda_a{j}_r{i}…, load_a{j}…, tie_a{j}…, dispatch_rel_err`, where `j` is
//! the area and `i` the resource index within its area. Values are written
//! with 16 significant digits, so a write/read round trip is exact to within
//! one part in 10¹⁵.

use std::io::Write;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::sim::SimTrace;

/// Column names for a trace with `n_areas` areas and the given resource layout.
pub fn trace_header(n_areas: usize, area_of_resource: &[usize]) -> Vec<String> {
    let local = local_indices(area_of_resource);
    let mut cols = vec!["time_s".to_string(), "slot".to_string()];
    cols.extend((0..n_areas).map(|j| format!("df_a{j}")));
    for prefix in ["pm", "pg", "u", "lambda"] {
        cols.extend(
            area_of_resource
                .iter()
                .zip(&local)
                .map(|(j, i)| format!("{prefix}_a{j}_r{i}")),
        );
    }
    cols.extend((0..n_areas).map(|j| format!("load_a{j}")));
    cols.extend((0..n_areas).map(|j| format!("tie_a{j}")));
    cols.push("dispatch_rel_err".to_string());
    cols
}

fn local_indices(area_of_resource: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(area_of_resource.len());
    for (k, &j) in area_of_resource.iter().enumerate() {
        let i = if k > 0 && area_of_resource[k - 1] == j {
            out[k - 1] + 1
        } else {
            0
        };
        out.push(i);
    }
    out
}

fn fmt(v: f64) -> String {
    format!("{v:.15e}")
}

/// Writes `trace` to `path` atomically (temporary file, then rename).
pub fn write_trace(trace: &SimTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(tmp.as_file()));
        w.write_record(trace_header(trace.n_areas(), &trace.area_of_resource))?;
        let mut record = Vec::new();
        for r in 0..trace.len() {
            record.clear();
            record.push(fmt(trace.times[r]));
            record.push(trace.slot[r].to_string());
            record.extend(trace.freq_dev.iter().map(|s| fmt(s[r])));
            for group in [
                &trace.mech_power,
                &trace.valve_pos,
                &trace.control,
                &trace.lambda,
            ] {
                record.extend(group.iter().map(|s| fmt(s[r])));
            }
            record.extend(trace.load.iter().map(|s| fmt(s[r])));
            record.extend(trace.tie_flow.iter().map(|s| fmt(s[r])));
            record.push(fmt(trace.dispatch_rel_err[r]));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().flush().map_err(|e| Error::io(path, e))?;
    persist(tmp, path)
}

/// Renames a finished temporary file onto `path`. Temporary files are created
/// owner-only; the result gets ordinary permissions.
pub(crate) fn persist(tmp: NamedTempFile, path: &Path) -> Result<()> {
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(tmp.path(), std::fs::Permissions::from_mode(0o644))
            .map_err(|e| Error::io(tmp.path(), e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Reads a trace written by [`write_trace`]. Row numbers in errors count data
/// rows from 1; the header is row 0.
pub fn read_trace(path: impl AsRef<Path>) -> Result<SimTrace> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let n_areas = header.iter().filter(|c| c.starts_with("df_a")).count();
    let mut area_of_resource = Vec::new();
    for col in header.iter().filter(|c| c.starts_with("pm_a")) {
        let area = col["pm_a".len()..]
            .split('_')
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::Trace {
                row: 0,
                message: format!("bad column name {col:?}"),
            })?;
        area_of_resource.push(area);
    }
    let expected = trace_header(n_areas, &area_of_resource);
    if header != expected {
        let at = header
            .iter()
            .zip(&expected)
            .position(|(a, b)| a != b)
            .unwrap_or(header.len().min(expected.len()));
        return Err(Error::Trace {
            row: 0,
            message: format!(
                "unexpected header at column {}: found {:?}, expected {:?}",
                at + 1,
                header.get(at),
                expected.get(at)
            ),
        });
    }

    let nr = area_of_resource.len();
    let mut trace = SimTrace::new(n_areas, area_of_resource);
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Error::Trace {
            row,
            message: e.to_string(),
        })?;
        if record.len() != expected.len() {
            return Err(Error::Trace {
                row,
                message: format!("expected {} fields, found {}", expected.len(), record.len()),
            });
        }
        let num = |c: usize| -> Result<f64> {
            record[c].trim().parse::<f64>().map_err(|e| Error::Trace {
                row,
                message: format!("column {:?}: {e} ({:?})", expected[c], &record[c]),
            })
        };
        let time = num(0)?;
        if trace.times.last().is_some_and(|&t| !(time > t)) {
            return Err(Error::Trace {
                row,
                message: format!("time {time} does not increase"),
            });
        }
        trace.times.push(time);
        trace
            .slot
            .push(record[1].trim().parse().map_err(|e| Error::Trace {
                row,
                message: format!("column \"slot\": {e} ({:?})", &record[1]),
            })?);
        let mut c = 2;
        for s in trace.freq_dev.iter_mut() {
            s.push(num(c)?);
            c += 1;
        }
        for group in [
            &mut trace.mech_power,
            &mut trace.valve_pos,
            &mut trace.control,
            &mut trace.lambda,
        ] {
            for s in group.iter_mut().take(nr) {
                s.push(num(c)?);
                c += 1;
            }
        }
        for s in trace.load.iter_mut() {
            s.push(num(c)?);
            c += 1;
        }
        for s in trace.tie_flow.iter_mut() {
            s.push(num(c)?);
            c += 1;
        }
        trace.dispatch_rel_err.push(num(c)?);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let h = trace_header(2, &[0, 0, 1]);
        assert_eq!(
            h,
            [
                "time_s",
                "slot",
                "df_a0",
                "df_a1",
                "pm_a0_r0",
                "pm_a0_r1",
                "pm_a1_r0",
                "pg_a0_r0",
                "pg_a0_r1",
                "pg_a1_r0",
                "u_a0_r0",
                "u_a0_r1",
                "u_a1_r0",
                "lambda_a0_r0",
                "lambda_a0_r1",
                "lambda_a1_r0",
                "load_a0",
                "load_a1",
                "tie_a0",
                "tie_a1",
                "dispatch_rel_err"
            ]
        );
    }

    #[test]
    fn empty_trace_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let trace = SimTrace::new(1, vec![0, 0]);
        write_trace(&trace, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back = read_trace(&path).unwrap();
        assert_eq!(back, trace);
    }

    #[test]
    fn malformed_row_reports_row_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let header = trace_header(1, &[0]).join(",");
        let good = "0,0,0,0,0,0,0,0,0,NaN";
        let bad = "1,0,0,0,zero,0,0,0,0,NaN";
        std::fs::write(&path, format!("{header}\n{good}\n{bad}\n")).unwrap();
        match read_trace(&path) {
            Err(Error::Trace { row, message }) => {
                assert_eq!(row, 2);
                assert!(message.contains("pg_a0_r0"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, format!("{header}\n{good}\n1,0\n")).unwrap();
        assert!(matches!(
            read_trace(&path),
            Err(Error::Trace { row: 2, .. })
        ));
        std::fs::write(&path, "time_s,bogus\n").unwrap();
        assert!(matches!(
            read_trace(&path),
            Err(Error::Trace { row: 0, .. })
        ));
    }
}
