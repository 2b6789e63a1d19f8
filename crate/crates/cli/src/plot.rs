//! Plot-ready CSVs: one file per state component with a column per agent,
//! the error series, and a gnuplot script that reads only those files.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use ddc_core::sim::Trace;

use crate::error::CliError;

pub const SCRIPT_NAME: &str = "plot.gp";

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(header).map_err(ddc_core::CoreError::from)?;
    for r in rows {
        w.write_record(&r).map_err(ddc_core::CoreError::from)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `axis<k>.csv` (`t, agent0, …, agentN`; agent 0 is the leader),
/// `error.csv` and the plotting script into `dir`.
pub fn emit_plot_data(trace: &Trace, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir)?;
    let agents = trace.agents();
    let axes = trace.states.first().and_then(|s| s.first()).map_or(trace.target_gain.ncols(), |x| x.len());
    let mut files = Vec::new();

    let mut header = vec!["t".to_string()];
    header.extend((0..agents).map(|i| format!("agent{i}")));
    for k in 0..axes {
        let path = dir.join(format!("axis{k}.csv"));
        let rows = trace.states.iter().enumerate().map(|(t, xs)| {
            std::iter::once(t.to_string()).chain(xs.iter().map(|x| x[k].to_string())).collect()
        });
        write_csv(&path, &header, rows)?;
        files.push(path);
    }

    let path = dir.join("error.csv");
    let header = ["t", "consensus_error", "gain_disagreement"].map(String::from);
    let rows = trace
        .consensus_error
        .iter()
        .zip(&trace.gain_disagreement)
        .enumerate()
        .map(|(t, (e, g))| vec![t.to_string(), e.to_string(), g.to_string()]);
    write_csv(&path, &header, rows)?;
    files.push(path);

    let path = dir.join(SCRIPT_NAME);
    let mut f = File::create(&path)?;
    writeln!(f, "# gnuplot {SCRIPT_NAME}")?;
    writeln!(f, "set datafile separator ','")?;
    writeln!(f, "set key autotitle columnhead")?;
    writeln!(f, "set terminal pngcairo size 900,600")?;
    writeln!(f, "set xlabel 't'")?;
    for k in 0..axes {
        writeln!(f, "set output 'axis{k}.png'")?;
        writeln!(f, "set ylabel 'x_{k}'")?;
        writeln!(f, "plot for [c=2:{}] 'axis{k}.csv' using 1:c with lines", agents + 1)?;
    }
    writeln!(f, "set output 'error.png'")?;
    writeln!(f, "set ylabel 'error'")?;
    writeln!(f, "set logscale y")?;
    writeln!(f, "plot 'error.csv' using 1:2 with lines, '' using 1:3 with lines")?;
    files.push(path);
    Ok(files)
}
