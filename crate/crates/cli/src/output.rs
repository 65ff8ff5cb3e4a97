//! CSV results and gnuplot scripts.
//!
//! Each CSV starts with a `# ciblp <schema>-v<version>` comment line followed
//! by the column header. Bodies hold no timestamps, so identical runs write
//! identical SER files.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ciblp::sim::{ExperimentConfig, SerResult, TimingResult};
use ciblp::validation::CheckReport;

pub const SER_SCHEMA: &str = "ser-v1";
pub const TIMING_SCHEMA: &str = "timing-v1";
pub const VALIDATE_SCHEMA: &str = "validate-v1";

pub const SER_COLUMNS: [&str; 12] = [
    "scheme",
    "K",
    "N_T",
    "M",
    "N",
    "p0",
    "snr_db",
    "symbols_sent",
    "symbol_errors",
    "ser",
    "ci95_halfwidth",
    "seed",
];

const TIMING_COLUMNS: [&str; 15] = [
    "scheme",
    "K",
    "N_T",
    "M",
    "N",
    "blocks",
    "qp_per_block",
    "qp_variables",
    "qp_constraints",
    "mean_s",
    "p50_s",
    "p95_s",
    "total_s",
    "end_to_end_mean_s",
    "seed",
];

const VALIDATE_COLUMNS: [&str; 6] = ["check", "instances", "worst", "tolerance", "passed", "seconds"];

fn csv_writer(path: &Path, schema: &str, columns: &[&str]) -> io::Result<csv::Writer<BufWriter<File>>> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# ciblp {schema}")?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    writer.write_record(columns)?;
    Ok(writer)
}

fn finish(writer: csv::Writer<BufWriter<File>>) -> io::Result<()> {
    writer
        .into_inner()
        .map_err(|e| io::Error::other(e.to_string()))?
        .flush()
}

/// One row per entry of `result`, for both `ser` and `blocklen` runs.
pub fn write_ser_csv(path: &Path, config: &ExperimentConfig, result: &SerResult) -> io::Result<()> {
    let mut w = csv_writer(path, SER_SCHEMA, &SER_COLUMNS)?;
    for e in &result.entries {
        w.write_record([
            e.scheme.name().to_string(),
            config.users.to_string(),
            config.antennas.to_string(),
            config.order.to_string(),
            e.block_length.to_string(),
            config.p0.to_string(),
            e.snr_db.to_string(),
            e.symbols_sent.to_string(),
            e.symbol_errors.to_string(),
            e.ser.to_string(),
            e.ci95_halfwidth.to_string(),
            config.seed.to_string(),
        ])?;
    }
    finish(w)
}

pub fn write_timing_csv(path: &Path, config: &ExperimentConfig, result: &TimingResult) -> io::Result<()> {
    let mut w = csv_writer(path, TIMING_SCHEMA, &TIMING_COLUMNS)?;
    for e in &result.entries {
        w.write_record([
            e.scheme.name().to_string(),
            config.users.to_string(),
            config.antennas.to_string(),
            config.order.to_string(),
            e.block_length.to_string(),
            e.blocks.to_string(),
            e.qp_per_block.to_string(),
            e.qp_variables.to_string(),
            e.qp_constraints.to_string(),
            e.mean_s.to_string(),
            e.p50_s.to_string(),
            e.p95_s.to_string(),
            e.total_s.to_string(),
            e.end_to_end_mean_s.map(|v| v.to_string()).unwrap_or_default(),
            config.seed.to_string(),
        ])?;
    }
    finish(w)
}

pub fn write_validate_csv(path: &Path, reports: &[CheckReport]) -> io::Result<()> {
    let mut w = csv_writer(path, VALIDATE_SCHEMA, &VALIDATE_COLUMNS)?;
    for r in reports {
        w.write_record([
            r.name.clone(),
            r.instances.to_string(),
            r.worst.to_string(),
            r.tolerance.to_string(),
            r.passed.to_string(),
            r.seconds.to_string(),
        ])?;
    }
    finish(w)
}

fn scheme_list(config: &ExperimentConfig) -> String {
    config
        .schemes
        .iter()
        .map(|s| s.name())
        .collect::<Vec<_>>()
        .join(" ")
}

fn csv_name(csv: &Path) -> String {
    csv.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Self-contained gnuplot script next to `csv`, plotting `y` against `x` per scheme.
fn write_scheme_plot(
    path: &Path,
    csv: &Path,
    config: &ExperimentConfig,
    x: (usize, &str),
    y: (usize, &str),
    log_x: bool,
) -> io::Result<()> {
    let data = csv_name(csv);
    let png = data.replace(".csv", ".png");
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# gnuplot script; run from this directory: gnuplot {}", csv_name(path))?;
    writeln!(out, "set datafile separator ','")?;
    writeln!(out, "set terminal pngcairo size 800,600")?;
    writeln!(out, "set output '{png}'")?;
    writeln!(out, "set xlabel '{}'", x.1)?;
    writeln!(out, "set ylabel '{}'", y.1)?;
    writeln!(out, "set logscale y")?;
    if log_x {
        writeln!(out, "set logscale x 2")?;
    }
    writeln!(out, "set grid")?;
    writeln!(out, "set key top right")?;
    writeln!(out, "schemes = \"{}\"", scheme_list(config))?;
    writeln!(
        out,
        "plot for [s in schemes] '{data}' using {}:(strcol(1) eq s ? ${} : NaN) with linespoints title s",
        x.0, y.0
    )?;
    out.flush()
}

pub fn write_ser_plot(path: &Path, csv: &Path, config: &ExperimentConfig) -> io::Result<()> {
    write_scheme_plot(path, csv, config, (7, "transmit SNR (dB)"), (10, "SER"), false)
}

pub fn write_blocklen_plot(path: &Path, csv: &Path, config: &ExperimentConfig) -> io::Result<()> {
    write_scheme_plot(path, csv, config, (5, "block length N"), (10, "SER"), true)
}

pub fn write_timing_plot(path: &Path, csv: &Path, config: &ExperimentConfig) -> io::Result<()> {
    write_scheme_plot(path, csv, config, (5, "block length N"), (13, "total QP time (s)"), true)
}

pub fn write_validate_plot(path: &Path, csv: &Path) -> io::Result<()> {
    let data = csv_name(csv);
    let png = data.replace(".csv", ".png");
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# gnuplot script; run from this directory: gnuplot {}", csv_name(path))?;
    writeln!(out, "set datafile separator ','")?;
    writeln!(out, "set terminal pngcairo size 1000,600")?;
    writeln!(out, "set output '{png}'")?;
    writeln!(out, "set ylabel 'worst deviation / tolerance'")?;
    writeln!(out, "set logscale y")?;
    writeln!(out, "set xtics rotate by -30")?;
    writeln!(out, "set style fill solid 0.6")?;
    writeln!(out, "set boxwidth 0.6")?;
    writeln!(out, "set arrow from graph 0, first 1 to graph 1, first 1 nohead dashtype 2")?;
    writeln!(
        out,
        "plot '{data}' using 0:($3 > 0 ? $3/$4 : 1e-16):xtic(1) with boxes notitle"
    )?;
    out.flush()
}

/// Paths of the CSV and plot script of `stem` inside `dir`.
pub fn artifact_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.gp")))
}
