//! CSV tables, the run manifest and the gnuplot script.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use pcrlb::experiment::GapSeries;
use pcrlb::{AggregateResult, BoundMethod, EstimatorKind};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::CliError;

pub const RMSE_HEADER: [&str; 3] = ["k", "rmse_ukf", "rmse_pf"];
pub const BOUNDS_HEADER: [&str; 6] = [
    "k",
    "true",
    "meanonly_ukf",
    "meanonly_pf",
    "meancov_ukf",
    "meancov_pf",
];
pub const GAP_HEADER: [&str; 5] = [
    "k",
    "gap26_ukf",
    "gapdirect_ukf",
    "gap26_pf",
    "gapdirect_pf",
];

/// Columns after `k`; a missing column is written as empty fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Option<Vec<f64>>>,
}

impl Table {
    pub fn new(header: &[&str], columns: Vec<Option<Vec<f64>>>) -> Result<Self, CliError> {
        if header.len() != columns.len() + 1 {
            return Err(CliError::Output(format!(
                "table has {} header fields for {} columns",
                header.len(),
                columns.len()
            )));
        }
        let lengths: Vec<usize> = columns.iter().flatten().map(Vec::len).collect();
        if lengths.windows(2).any(|w| w[0] != w[1]) {
            return Err(CliError::Output("table columns differ in length".into()));
        }
        Ok(Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            columns,
        })
    }

    pub fn rows(&self) -> usize {
        self.columns
            .iter()
            .flatten()
            .map(Vec::len)
            .next()
            .unwrap_or(0)
    }

    /// Floats use the shortest representation that parses back to the same
    /// value.
    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for i in 0..self.rows() {
            write!(out, "{}", i + 1).expect("writing to a String");
            for col in &self.columns {
                out.push(',');
                if let Some(values) = col {
                    write!(out, "{}", values[i]).expect("writing to a String");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Writes a table to `path`.
pub fn write_csv(table: &Table, path: &Path) -> Result<(), CliError> {
    fs::write(path, table.render())
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Parses a table written by [`write_csv`]; empty fields become `None`
/// columns.
pub fn read_csv(text: &str) -> Result<Table, CliError> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| CliError::Output("empty CSV".into()))?
        .split(',')
        .collect();
    let width = header.len();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); width - 1];
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width || fields[0] != (row + 1).to_string() {
            return Err(CliError::Output(format!("malformed CSV row {}", row + 1)));
        }
        for (col, field) in columns.iter_mut().zip(&fields[1..]) {
            col.push(if field.is_empty() {
                None
            } else {
                Some(
                    field
                        .parse()
                        .map_err(|_| CliError::Output(format!("bad number {field:?}")))?,
                )
            });
        }
    }
    let columns = columns
        .into_iter()
        .map(|c| {
            c.into_iter()
                .collect::<Option<Vec<f64>>>()
                .filter(|v| !v.is_empty())
        })
        .collect();
    Table::new(&header, columns)
}

fn traces(
    agg: &AggregateResult,
    method: BoundMethod,
    estimator: Option<EstimatorKind>,
) -> Option<Vec<f64>> {
    agg.bound(method, estimator).map(|b| b.traces())
}

fn gap_traces(
    agg: &AggregateResult,
    kind: EstimatorKind,
    pick: fn(&GapSeries) -> &Vec<nalgebra::DMatrix<f64>>,
) -> Option<Vec<f64>> {
    agg.gaps
        .get(&kind)
        .map(|g| pick(g).iter().map(|m| m.trace()).collect())
}

pub fn rmse_table(agg: &AggregateResult) -> Result<Table, CliError> {
    Table::new(
        &RMSE_HEADER,
        vec![
            agg.rmse.get(&EstimatorKind::Ukf).cloned(),
            agg.rmse.get(&EstimatorKind::Pf).cloned(),
        ],
    )
}

/// Matrix-valued bounds are reported by their trace.
pub fn bounds_table(agg: &AggregateResult) -> Result<Table, CliError> {
    use BoundMethod::{MeanCov, MeanOnly, True};
    use EstimatorKind::{Pf, Ukf};
    Table::new(
        &BOUNDS_HEADER,
        vec![
            traces(agg, True, None),
            traces(agg, MeanOnly, Some(Ukf)),
            traces(agg, MeanOnly, Some(Pf)),
            traces(agg, MeanCov, Some(Ukf)),
            traces(agg, MeanCov, Some(Pf)),
        ],
    )
}

pub fn gap_table(agg: &AggregateResult) -> Result<Table, CliError> {
    use EstimatorKind::{Pf, Ukf};
    Table::new(
        &GAP_HEADER,
        vec![
            gap_traces(agg, Ukf, |g| &g.analytic),
            gap_traces(agg, Ukf, |g| &g.direct),
            gap_traces(agg, Pf, |g| &g.analytic),
            gap_traces(agg, Pf, |g| &g.direct),
        ],
    )
}

#[derive(Debug, Serialize)]
struct GapDiagnostics {
    estimator: EstimatorKind,
    /// Runs per step where the mean-only bound fell below the mean+cov one.
    ordering_violations: Vec<usize>,
    ordering_violations_total: usize,
    analytic_gap_fallbacks: usize,
    pi_fallbacks: usize,
    ill_conditioned_pi: usize,
}

#[derive(Debug, Serialize)]
struct FailedRun<'a> {
    run: usize,
    error: &'a str,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    version: &'static str,
    command: &'a str,
    seed: u64,
    runs_total: usize,
    runs_used: usize,
    failed_runs: Vec<FailedRun<'a>>,
    gaps: Vec<GapDiagnostics>,
    files: Vec<&'a str>,
    config: &'a ConfigFile,
}

pub fn manifest_json(
    command: &str,
    config: &ConfigFile,
    agg: &AggregateResult,
    files: &[&str],
) -> Result<String, CliError> {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: config.experiment.seed,
        runs_total: agg.runs_total,
        runs_used: agg.runs_used(),
        failed_runs: agg
            .failed
            .iter()
            .map(|f| FailedRun {
                run: f.run,
                error: &f.message,
            })
            .collect(),
        gaps: agg
            .gaps
            .values()
            .map(|g| GapDiagnostics {
                estimator: g.estimator,
                ordering_violations_total: g.violations.iter().sum(),
                ordering_violations: g.violations.clone(),
                analytic_gap_fallbacks: g.analytic_fallbacks.iter().sum(),
                pi_fallbacks: g.pi_fallbacks.iter().sum(),
                ill_conditioned_pi: g.ill_conditioned.iter().sum(),
            })
            .collect(),
        files: files.to_vec(),
        config,
    };
    let mut text =
        serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Gnuplot script drawing one PNG per figure from the CSVs next to it.
pub fn emit_plot_script(out_dir: &Path, path: &Path) -> Result<(), CliError> {
    let has = |name: &str| out_dir.join(name).exists();
    let mut s = String::from(
        "# gnuplot script; run from the output directory: gnuplot plot.gp\n\
         set datafile separator ','\n\
         set datafile missing ''\n\
         set terminal pngcairo size 900,600\n\
         set key autotitle columnhead\n\
         set xlabel 'k'\n\
         set grid\n",
    );
    if has("rmse.csv") {
        s.push_str(
            "\nset output 'rmse.png'\nset title 'RMS estimation error'\nunset logscale y\n\
             plot 'rmse.csv' using 1:2 with lines lw 2, '' using 1:3 with lines lw 2\n",
        );
    }
    if has("bounds.csv") {
        for (file, title, cols) in [
            ("bounds_ukf.png", "Bounds, UKF beliefs", (3, 5)),
            ("bounds_pf.png", "Bounds, PF beliefs", (4, 6)),
        ] {
            writeln!(
                s,
                "\nset output '{file}'\nset title '{title}'\nset logscale y\n\
                 plot 'bounds.csv' using 1:2 with lines lw 2, '' using 1:{} with lines lw 2, '' using 1:{} with lines lw 2",
                cols.0, cols.1
            )
            .expect("writing to a String");
        }
    }
    if has("gap.csv") {
        s.push_str(
            "\nset output 'gap.png'\nset title 'Gap between the approximate bounds'\nunset logscale y\n\
             plot 'gap.csv' using 1:2 with lines lw 2, '' using 1:3 with points, \
             '' using 1:4 with lines lw 2, '' using 1:5 with points\n",
        );
    }
    fs::write(path, s).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_series_gives_header_only() {
        let t = Table::new(&["k", "v"], vec![Some(vec![])]).unwrap();
        assert_eq!(t.render(), "k,v\n");
    }

    #[test]
    fn scalar_row() {
        let t = Table::new(&["k", "v"], vec![Some(vec![0.5])]).unwrap();
        assert_eq!(t.render(), "k,v\n1,0.5\n");
    }

    #[test]
    fn missing_columns_are_blank() {
        let t = Table::new(&["k", "a", "b"], vec![None, Some(vec![1.0, 2.0])]).unwrap();
        assert_eq!(t.render(), "k,a,b\n1,,1\n2,,2\n");
        assert_eq!(read_csv(&t.render()).unwrap(), t);
    }

    #[test]
    fn round_trip_is_exact() {
        let values = vec![
            0.1 + 0.2,
            1.0 / 3.0,
            1e-300,
            123456789.12345679,
            -2.5e17,
            f64::MIN_POSITIVE,
        ];
        let t = Table::new(&["k", "v"], vec![Some(values.clone())]).unwrap();
        let back = read_csv(&t.render()).unwrap();
        let parsed = back.columns[0].as_ref().unwrap();
        assert!(parsed
            .iter()
            .zip(&values)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn ragged_columns_rejected() {
        assert!(Table::new(&["k", "a", "b"], vec![Some(vec![1.0]), Some(vec![])]).is_err());
        assert!(Table::new(&["k"], vec![Some(vec![1.0])]).is_err());
    }
}
