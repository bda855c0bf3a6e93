//! CSV export of simulation runs.
//!
//! Columns are `k, error_norm, V, u_hat_norm` followed by the external output
//! of every node (`y_<id>`, or `y_<id>_<r>` for multi-row outputs). Reals are
//! written with 17 significant digits so they parse back bit for bit.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use simnet_core::network::Network;
use simnet_core::simulator::SimulationRun;

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: row {row}: {detail}")]
    Parse {
        path: String,
        row: usize,
        detail: String,
    },
}

pub fn header(network: &Network) -> Vec<String> {
    let mut cols: Vec<String> = ["k", "error_norm", "V", "u_hat_norm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for sub in network.subsystems() {
        let width = sub.external_block(0).width();
        if width == 1 {
            cols.push(format!("y_{}", sub.id));
        } else {
            cols.extend((0..width).map(|r| format!("y_{}_{}", sub.id, r)));
        }
    }
    cols
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_run<W: Write>(
    out: W,
    run: &SimulationRun,
    network: &Network,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(network))?;
    for k in 0..run.steps() {
        let mut rec = vec![
            k.to_string(),
            real(run.error_trace[k]),
            real(run.v_trace[k]),
            real(run.u_hat_norm[k]),
        ];
        for y in &run.outputs[k] {
            rec.extend(y.iter().map(|&v| real(v)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_run(path: &Path, run: &SimulationRun, network: &Network) -> Result<(), ExportError> {
    let p = path.display().to_string();
    let file = File::create(path).map_err(|source| ExportError::Io {
        path: p.clone(),
        source,
    })?;
    write_run(file, run, network).map_err(|source| ExportError::Csv { path: p, source })
}

/// Reads the `error_norm` column back.
pub fn read_error_trace(path: &Path) -> Result<Vec<f64>, ExportError> {
    let p = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|source| ExportError::Csv {
        path: p.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|source| ExportError::Csv {
            path: p.clone(),
            source,
        })?;
        let field = rec.get(1).ok_or_else(|| ExportError::Parse {
            path: p.clone(),
            row,
            detail: "missing error_norm".into(),
        })?;
        out.push(
            field
                .parse()
                .map_err(|e: std::num::ParseFloatError| ExportError::Parse {
                    path: p.clone(),
                    row,
                    detail: e.to_string(),
                })?,
        );
    }
    Ok(out)
}
