//! File formats: a flat little-endian binary container for bulk numeric
//! data (trajectories, burst endpoints) and CSV for everything meant to be
//! read or plotted.
//!
//! Floats in CSV are written with 17 significant digits, which round-trips
//! `f64` exactly; binary bodies are raw little-endian `f64`, row-major.

use crate::embedding::EmbeddedCloud;
use crate::error::{Error, Result};
use crate::manifold::DiffusionMapModel;
use crate::mat::Mat;
use crate::sampling::{BurstEnsemble, EquilibriumTrajectory, EvaluationSet, Provenance};
use crate::spectrum::{ComparisonTable, CountMatrix, SpectrumReport, Timescale, TransitionMatrix};
use crate::validation::CommittorEstimate;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"TMRCBIN\0";
const FORMAT_VERSION: u32 = 1;
const KIND_TRAJECTORY: u32 = 1;
const KIND_BURSTS: u32 = 2;
const KIND_MATRIX: u32 = 3;

/// 17-significant-digit decimal form; round-trips `f64` exactly.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_float(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse {
        file: String::new(),
        detail: format!("not a number: '{s}'"),
    })
}

fn parse_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Parse {
        file: path.display().to_string(),
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Binary container
// ---------------------------------------------------------------------------

struct BinWriter<W: Write> {
    w: W,
}

impl<W: Write> BinWriter<W> {
    fn header(mut w: W, kind: u32) -> Result<Self> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&kind.to_le_bytes())?;
        Ok(Self { w })
    }

    fn u64(&mut self, v: u64) -> Result<()> {
        self.w.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        self.w.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn f64_slice(&mut self, vs: &[f64]) -> Result<()> {
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }
}

struct BinReader<R: Read> {
    r: R,
}

impl<R: Read> BinReader<R> {
    fn header(mut r: R, expect_kind: u32, path: &Path) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(parse_err(path, "bad magic; not a tmrc binary file"));
        }
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)?;
        let version = u32::from_le_bytes(buf);
        if version != FORMAT_VERSION {
            return Err(parse_err(path, format!("unsupported version {version}")));
        }
        r.read_exact(&mut buf)?;
        let kind = u32::from_le_bytes(buf);
        if kind != expect_kind {
            return Err(parse_err(
                path,
                format!("wrong payload kind {kind}, expected {expect_kind}"),
            ));
        }
        Ok(Self { r })
    }

    fn u64(&mut self) -> Result<u64> {
        let mut buf = [0u8; 8];
        self.r.read_exact(&mut buf)?;
        Ok(u64::from_le_bytes(buf))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut buf = [0u8; 8];
        self.r.read_exact(&mut buf)?;
        Ok(f64::from_le_bytes(buf))
    }

    fn f64_vec(&mut self, count: usize) -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; count * 8];
        self.r.read_exact(&mut bytes)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Header: dim, state count, tau, seed, then `x0` and the states row-major.
pub fn write_trajectory(path: &Path, traj: &EquilibriumTrajectory) -> Result<()> {
    let mut w = BinWriter::header(BufWriter::new(File::create(path)?), KIND_TRAJECTORY)?;
    w.u64(traj.dim() as u64)?;
    w.u64(traj.len() as u64)?;
    w.f64(traj.tau)?;
    w.u64(traj.seed)?;
    w.f64_slice(&traj.x0)?;
    w.f64_slice(traj.states.as_slice())?;
    w.w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<EquilibriumTrajectory> {
    let mut r = BinReader::header(BufReader::new(File::open(path)?), KIND_TRAJECTORY, path)?;
    let dim = r.u64()? as usize;
    let n = r.u64()? as usize;
    let tau = r.f64()?;
    let seed = r.u64()?;
    let x0 = r.f64_vec(dim)?;
    let states = Mat::from_flat(r.f64_vec(n * dim)?, n, dim)?;
    Ok(EquilibriumTrajectory {
        states,
        tau,
        x0,
        seed,
    })
}

/// Header: dim, point count, replicates, lag, seed; per point the start and
/// its endpoint block.
pub fn write_bursts(path: &Path, bursts: &[BurstEnsemble], seed: u64) -> Result<()> {
    let first = bursts
        .first()
        .ok_or_else(|| Error::Argument("no bursts to write".into()))?;
    let mut w = BinWriter::header(BufWriter::new(File::create(path)?), KIND_BURSTS)?;
    w.u64(first.start.len() as u64)?;
    w.u64(bursts.len() as u64)?;
    w.u64(first.replicates() as u64)?;
    w.f64(first.lag)?;
    w.u64(seed)?;
    for b in bursts {
        w.f64_slice(&b.start)?;
        w.f64_slice(b.endpoints.as_slice())?;
    }
    w.w.flush()?;
    Ok(())
}

pub fn read_bursts(path: &Path) -> Result<(Vec<BurstEnsemble>, u64)> {
    let mut r = BinReader::header(BufReader::new(File::open(path)?), KIND_BURSTS, path)?;
    let dim = r.u64()? as usize;
    let points = r.u64()? as usize;
    let m = r.u64()? as usize;
    let lag = r.f64()?;
    let seed = r.u64()?;
    let mut out = Vec::with_capacity(points);
    for _ in 0..points {
        let start = r.f64_vec(dim)?;
        let endpoints = Mat::from_flat(r.f64_vec(m * dim)?, m, dim)?;
        out.push(BurstEnsemble {
            start,
            lag,
            endpoints,
        });
    }
    Ok((out, seed))
}

/// Plain row-major matrix payload.
pub fn write_matrix_bin(path: &Path, m: &Mat) -> Result<()> {
    let mut w = BinWriter::header(BufWriter::new(File::create(path)?), KIND_MATRIX)?;
    w.u64(m.rows() as u64)?;
    w.u64(m.cols() as u64)?;
    w.f64_slice(m.as_slice())?;
    w.w.flush()?;
    Ok(())
}

pub fn read_matrix_bin(path: &Path) -> Result<Mat> {
    let mut r = BinReader::header(BufReader::new(File::open(path)?), KIND_MATRIX, path)?;
    let rows = r.u64()? as usize;
    let cols = r.u64()? as usize;
    Mat::from_flat(r.f64_vec(rows * cols)?, rows, cols)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Comment lines, a header line, and float rows of a tmrc CSV file.
struct Table {
    comments: Vec<String>,
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table> {
    let reader = BufReader::new(File::open(path)?);
    let mut comments = Vec::new();
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(stripped) = trimmed.strip_prefix('#') {
            comments.push(stripped.trim().to_string());
            continue;
        }
        if header.is_none() {
            header = Some(trimmed.split(',').map(|s| s.trim().to_string()).collect());
            continue;
        }
        let row: Result<Vec<f64>> = trimmed
            .split(',')
            .map(|cell| {
                parse_float(cell).map_err(|_| {
                    parse_err(path, format!("line {}: bad number '{cell}'", lineno + 1))
                })
            })
            .collect();
        rows.push(row?);
    }
    Ok(Table {
        comments,
        header: header.ok_or_else(|| parse_err(path, "missing header line"))?,
        rows,
    })
}

fn comment_value<'a>(table: &'a Table, key: &str) -> Option<&'a str> {
    table
        .comments
        .iter()
        .find_map(|c| c.strip_prefix(key).map(str::trim))
}

fn write_provenance(w: &mut impl Write, p: &Provenance) -> Result<()> {
    match p {
        Provenance::Grid { rect, shape } => {
            writeln!(w, "# provenance grid")?;
            let rect_s: Vec<String> = rect
                .iter()
                .map(|(lo, hi)| format!("{} {}", format_float(*lo), format_float(*hi)))
                .collect();
            writeln!(w, "# rect {}", rect_s.join(";"))?;
            let shape_s: Vec<String> = shape.iter().map(usize::to_string).collect();
            writeln!(w, "# shape {}", shape_s.join(";"))?;
        }
        Provenance::TrajectorySubsample { count } => {
            writeln!(w, "# provenance subsample {count}")?;
        }
        Provenance::Explicit => writeln!(w, "# provenance explicit")?,
    }
    Ok(())
}

fn read_provenance(table: &Table, path: &Path) -> Result<Provenance> {
    match comment_value(table, "provenance") {
        Some("grid") => {
            let rect_s = comment_value(table, "rect")
                .ok_or_else(|| parse_err(path, "grid provenance without rect"))?;
            let shape_s = comment_value(table, "shape")
                .ok_or_else(|| parse_err(path, "grid provenance without shape"))?;
            let rect: Result<Vec<(f64, f64)>> = rect_s
                .split(';')
                .map(|pair| {
                    let mut it = pair.split_whitespace();
                    let lo = parse_float(it.next().unwrap_or(""))?;
                    let hi = parse_float(it.next().unwrap_or(""))?;
                    Ok((lo, hi))
                })
                .collect();
            let shape: Result<Vec<usize>> = shape_s
                .split(';')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| parse_err(path, format!("bad shape entry '{s}'")))
                })
                .collect();
            Ok(Provenance::Grid {
                rect: rect?,
                shape: shape?,
            })
        }
        Some(s) if s.starts_with("subsample") => {
            let count = s
                .split_whitespace()
                .nth(1)
                .and_then(|c| c.parse().ok())
                .unwrap_or(0);
            Ok(Provenance::TrajectorySubsample { count })
        }
        _ => Ok(Provenance::Explicit),
    }
}

fn write_csv_row(w: &mut impl Write, vals: impl Iterator<Item = f64>) -> Result<()> {
    let cells: Vec<String> = vals.map(format_float).collect();
    writeln!(w, "{}", cells.join(","))?;
    Ok(())
}

/// Evaluation points with provenance comments; columns `x_1..x_n`.
pub fn write_points_csv(path: &Path, eval: &EvaluationSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_provenance(&mut w, &eval.provenance)?;
    let header: Vec<String> = (1..=eval.dim()).map(|i| format!("x_{i}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in eval.points.iter_rows() {
        write_csv_row(&mut w, row.iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points_csv(path: &Path) -> Result<EvaluationSet> {
    let table = read_table(path)?;
    let provenance = read_provenance(&table, path)?;
    let cols = table.header.len();
    let mut points = Mat::with_cols(cols);
    for row in &table.rows {
        if row.len() != cols {
            return Err(parse_err(path, "ragged row"));
        }
        points.push_row(row);
    }
    Ok(EvaluationSet { points, provenance })
}

/// Columns `x_1..x_n, z_1..z_k, se_1..se_k` plus lag/replicate comments.
pub fn write_embedded_csv(path: &Path, cloud: &EmbeddedCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# lag {}", format_float(cloud.lag))?;
    writeln!(w, "# replicates {}", cloud.replicates)?;
    write_provenance(&mut w, &cloud.source.provenance)?;
    let n = cloud.source.dim();
    let k = cloud.k();
    let mut header: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    header.extend((1..=k).map(|i| format!("z_{i}")));
    header.extend((1..=k).map(|i| format!("se_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..cloud.len() {
        let vals = cloud
            .source
            .points
            .row(i)
            .iter()
            .chain(cloud.z.row(i))
            .chain(cloud.stderr.row(i))
            .copied();
        write_csv_row(&mut w, vals)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embedded_csv(path: &Path) -> Result<EmbeddedCloud> {
    let table = read_table(path)?;
    let lag = parse_float(
        comment_value(&table, "lag").ok_or_else(|| parse_err(path, "missing lag comment"))?,
    )?;
    let replicates = comment_value(&table, "replicates")
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let provenance = read_provenance(&table, path)?;
    let n = table.header.iter().filter(|h| h.starts_with("x_")).count();
    let k = table.header.iter().filter(|h| h.starts_with("z_")).count();
    if n == 0 || k == 0 || table.header.len() != n + 2 * k {
        return Err(parse_err(path, "expected columns x_*, z_*, se_*"));
    }
    let mut points = Mat::with_cols(n);
    let mut z = Mat::with_cols(k);
    let mut se = Mat::with_cols(k);
    for row in &table.rows {
        if row.len() != n + 2 * k {
            return Err(parse_err(path, "ragged row"));
        }
        points.push_row(&row[..n]);
        z.push_row(&row[n..n + k]);
        se.push_row(&row[n + k..]);
    }
    Ok(EmbeddedCloud {
        z,
        stderr: se,
        source: EvaluationSet { points, provenance },
        lag,
        replicates,
    })
}

/// Reaction-coordinate values keyed by evaluation-point coordinates.
pub fn write_rc_csv(path: &Path, eval: &EvaluationSet, values: &Mat) -> Result<()> {
    if values.rows() != eval.len() {
        return Err(Error::Argument("RC row count mismatch".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_provenance(&mut w, &eval.provenance)?;
    let mut header: Vec<String> = (1..=eval.dim()).map(|i| format!("x_{i}")).collect();
    header.extend((1..=values.cols()).map(|i| format!("rc_{i}")));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..eval.len() {
        let vals = eval.points.row(i).iter().chain(values.row(i)).copied();
        write_csv_row(&mut w, vals)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rc_csv(path: &Path) -> Result<(EvaluationSet, Mat)> {
    let table = read_table(path)?;
    let provenance = read_provenance(&table, path)?;
    let n = table.header.iter().filter(|h| h.starts_with("x_")).count();
    let r = table.header.iter().filter(|h| h.starts_with("rc_")).count();
    if n == 0 || r == 0 || table.header.len() != n + r {
        return Err(parse_err(path, "expected columns x_*, rc_*"));
    }
    let mut points = Mat::with_cols(n);
    let mut values = Mat::with_cols(r);
    for row in &table.rows {
        points.push_row(&row[..n]);
        values.push_row(&row[n..]);
    }
    Ok((EvaluationSet { points, provenance }, values))
}

/// Diffusion-map model as one file of CSV blocks.
pub fn write_diffmap_model(path: &Path, model: &DiffusionMapModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# tmrc diffusion-map model v1")?;
    writeln!(w, "# sigma {}", format_float(model.sigma))?;
    writeln!(w, "# cutoff {}", format_float(model.cutoff))?;
    writeln!(w, "# r {}", model.r)?;
    writeln!(w, "# weak_separation {}", model.weak_separation as u8)?;
    writeln!(w, "# section eigenvalues")?;
    for &g in &model.eigenvalues {
        writeln!(w, "{}", format_float(g))?;
    }
    writeln!(w, "# section eigenvectors")?;
    for i in 0..model.eigenvectors.rows() {
        write_csv_row(&mut w, model.eigenvectors.row(i).iter().copied())?;
    }
    writeln!(w, "# section training")?;
    for i in 0..model.training.rows() {
        write_csv_row(&mut w, model.training.row(i).iter().copied())?;
    }
    writeln!(w, "# section kept")?;
    for &k in &model.kept {
        writeln!(w, "{k}")?;
    }
    writeln!(w, "# section dropped")?;
    for &d in &model.dropped {
        writeln!(w, "{d}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_diffmap_model(path: &Path) -> Result<DiffusionMapModel> {
    let reader = BufReader::new(File::open(path)?);
    let mut sigma = None;
    let mut cutoff = None;
    let mut r = None;
    let mut weak = false;
    let mut section = String::new();
    let mut eigenvalues = Vec::new();
    let mut eigenvector_rows: Vec<Vec<f64>> = Vec::new();
    let mut training_rows: Vec<Vec<f64>> = Vec::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            let c = c.trim();
            if let Some(v) = c.strip_prefix("sigma") {
                sigma = Some(parse_float(v)?);
            } else if let Some(v) = c.strip_prefix("cutoff") {
                cutoff = Some(parse_float(v)?);
            } else if let Some(v) = c.strip_prefix("r ") {
                r = v.trim().parse().ok();
            } else if let Some(v) = c.strip_prefix("weak_separation") {
                weak = v.trim() == "1";
            } else if let Some(v) = c.strip_prefix("section") {
                section = v.trim().to_string();
            }
            continue;
        }
        match section.as_str() {
            "eigenvalues" => eigenvalues.push(parse_float(t)?),
            "eigenvectors" => {
                eigenvector_rows.push(t.split(',').map(parse_float).collect::<Result<_>>()?)
            }
            "training" => {
                training_rows.push(t.split(',').map(parse_float).collect::<Result<_>>()?)
            }
            "kept" => kept.push(
                t.parse::<usize>()
                    .map_err(|_| parse_err(path, format!("bad kept index '{t}'")))?,
            ),
            "dropped" => dropped.push(
                t.parse::<usize>()
                    .map_err(|_| parse_err(path, format!("bad dropped index '{t}'")))?,
            ),
            _ => return Err(parse_err(path, format!("data outside a section: '{t}'"))),
        }
    }
    let (Some(sigma), Some(cutoff), Some(r)) = (sigma, cutoff, r) else {
        return Err(parse_err(path, "missing sigma/cutoff/r"));
    };
    if eigenvalues.is_empty() || training_rows.is_empty() {
        return Err(parse_err(path, "missing eigenvalue or training sections"));
    }
    Ok(DiffusionMapModel {
        training: Mat::from_rows(&training_rows)?,
        kept,
        sigma,
        cutoff,
        eigenvalues,
        eigenvectors: Mat::from_rows(&eigenvector_rows)?,
        r,
        dropped,
        weak_separation: weak,
    })
}

fn timescale_cell(t: &Timescale) -> String {
    match t {
        Timescale::Infinite => "inf".to_string(),
        Timescale::Finite(v) => format_float(*v),
        Timescale::Undefined => "undef".to_string(),
    }
}

/// Columns `index, lambda, timescale, flag`; the flag marks the dominant
/// block.
pub fn write_spectrum_csv(path: &Path, report: &SpectrumReport) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# lag {}", format_float(report.lag_time))?;
    writeln!(w, "# components {}", report.components)?;
    writeln!(w, "# flagged_cells {}", report.flagged_cells.len())?;
    writeln!(w, "# dominant {}", report.dominant)?;
    writeln!(w, "index,lambda,timescale,flag")?;
    for (i, (l, t)) in report
        .eigenvalues
        .iter()
        .zip(&report.timescales)
        .enumerate()
    {
        let flag = if i <= report.dominant { "dominant" } else { "" };
        writeln!(w, "{i},{},{},{flag}", format_float(*l), timescale_cell(t))?;
    }
    w.flush()?;
    Ok(())
}

/// Eigenfunction values on cells: columns `cell, phi_0..phi_{k-1}`.
pub fn write_eigenfunctions_csv(path: &Path, report: &SpectrumReport) -> Result<()> {
    let Some(vecs) = &report.eigenvectors else {
        return Err(Error::Argument(
            "report carries no eigenvectors (matrix was not symmetrized)".into(),
        ));
    };
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = std::iter::once("cell".to_string())
        .chain((0..vecs.cols()).map(|j| format!("phi_{j}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (row, &cell) in report.component_cells.iter().enumerate() {
        let cells: Vec<String> = std::iter::once(cell.to_string())
            .chain(vecs.row(row).iter().map(|&v| format_float(v)))
            .collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_comparison_csv(path: &Path, table: &ComparisonTable) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# reference {}", table.reference)?;
    writeln!(
        w,
        "name,index,lambda,delta_vs_reference,timescale,timescale_ratio,flag"
    )?;
    for row in &table.rows {
        let ratio = row
            .timescale_ratio
            .map(format_float)
            .unwrap_or_else(|| "".into());
        let flag = if row.exceeds_reference { "exceeds" } else { "" };
        writeln!(
            w,
            "{},{},{},{},{},{},{flag}",
            row.name,
            row.index,
            format_float(row.lambda),
            format_float(row.delta_vs_reference),
            timescale_cell(&row.timescale),
            ratio
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Committor estimates gridded for contour plotting: one row per point.
pub fn write_committor_csv(path: &Path, estimates: &[CommittorEstimate]) -> Result<()> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::Argument("no committor estimates".into()))?;
    let mut w = BufWriter::new(File::create(path)?);
    let n = first.point.len();
    let mut header: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    header.extend((0..first.q.len()).map(|i| format!("q_{i}")));
    header.push("undecided".into());
    header.push("inconclusive".into());
    writeln!(w, "{}", header.join(","))?;
    for est in estimates {
        let vals = est
            .point
            .iter()
            .chain(est.q.iter())
            .chain(std::iter::once(&est.undecided_fraction))
            .copied();
        let mut cells: Vec<String> = vals.map(format_float).collect();
        cells.push((est.inconclusive as u8).to_string());
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Raw counts as integer CSV (no header comments).
pub fn write_counts_csv(path: &Path, counts: &CountMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..counts.n).map(|j| format!("c_{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..counts.n {
        let cells: Vec<String> = (0..counts.n).map(|j| counts.get(i, j).to_string()).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_stochastic_csv(path: &Path, tm: &TransitionMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# lag {}", format_float(tm.lag_time))?;
    writeln!(w, "# symmetrized {}", tm.symmetrized as u8)?;
    let header: Vec<String> = (0..tm.n).map(|j| format!("p_{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..tm.n {
        write_csv_row(&mut w, (0..tm.n).map(|j| tm.prob(i, j)))?;
    }
    w.flush()?;
    Ok(())
}

/// Cell sequence: header `cell`, one cell index or `oob` per line.
pub fn read_cells_csv(path: &Path) -> Result<Vec<Option<usize>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    let mut saw_header = false;
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !saw_header {
            saw_header = true;
            if t == "cell" {
                continue;
            }
            // headerless files are accepted
        }
        if t == "oob" {
            out.push(None);
        } else {
            out.push(Some(t.parse::<usize>().map_err(|_| {
                parse_err(path, format!("bad cell index '{t}'"))
            })?));
        }
    }
    if out.is_empty() {
        return Err(parse_err(path, "empty cell sequence"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{IntegratorConfig, PotentialSystem};
    use crate::embedding::{embed_cloud, reference_observables_2d};
    use crate::manifold::{build_kernel, fit_diffmap, IsolatedPolicy};
    use crate::sampling::{make_grid, run_equilibrium, sample_bursts};

    fn tmpdir() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn float_format_round_trips_exactly() {
        for v in [
            0.0,
            -1.5,
            std::f64::consts::PI,
            1e-300,
            -2.2250738585072014e-308,
            6.02e23,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ] {
            let s = format_float(v);
            assert_eq!(parse_float(&s).unwrap(), v, "via '{s}'");
        }
        assert!(parse_float(&format_float(f64::NAN)).unwrap().is_nan());
    }

    #[test]
    fn trajectory_binary_round_trip() {
        let sys = PotentialSystem::curved_double_well(0.5).unwrap();
        let cfg = IntegratorConfig::default();
        let traj = run_equilibrium(&sys, &cfg, &[1.0, 0.0], 100, cfg.h, 7).unwrap();
        let dir = tmpdir();
        let path = dir.path().join("traj.bin");
        write_trajectory(&path, &traj).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(traj, back);
    }

    #[test]
    fn bursts_binary_round_trip() {
        let sys = PotentialSystem::quad_flat(0.5).unwrap();
        let cfg = IntegratorConfig::default();
        let eval = make_grid(&[(-1.0, 1.0), (-1.0, 1.0)], &[2, 2]).unwrap();
        let bursts = sample_bursts(&sys, &cfg, &eval, 5, 0.05, 3).unwrap();
        let dir = tmpdir();
        let path = dir.path().join("bursts.bin");
        write_bursts(&path, &bursts, 3).unwrap();
        let (back, seed) = read_bursts(&path).unwrap();
        assert_eq!(seed, 3);
        assert_eq!(bursts, back);
    }

    #[test]
    fn wrong_kind_is_a_parse_error() {
        let dir = tmpdir();
        let path = dir.path().join("m.bin");
        write_matrix_bin(&path, &Mat::zeros(2, 2)).unwrap();
        assert!(matches!(read_trajectory(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn points_csv_round_trips_grid_provenance() {
        let eval = make_grid(&[(-2.0, 2.0), (-1.0, 2.0)], &[4, 3]).unwrap();
        let dir = tmpdir();
        let path = dir.path().join("points.csv");
        write_points_csv(&path, &eval).unwrap();
        let back = read_points_csv(&path).unwrap();
        assert_eq!(eval, back);
    }

    #[test]
    fn embedded_cloud_csv_round_trips() {
        let sys = PotentialSystem::curved_double_well(0.5).unwrap();
        let cfg = IntegratorConfig::default();
        let eval = make_grid(&[(-1.0, 1.0), (0.0, 1.0)], &[3, 2]).unwrap();
        let bursts = sample_bursts(&sys, &cfg, &eval, 20, 0.1, 5).unwrap();
        let cloud = embed_cloud(&reference_observables_2d(), &bursts, eval).unwrap();
        let dir = tmpdir();
        let path = dir.path().join("cloud.csv");
        write_embedded_csv(&path, &cloud).unwrap();
        let back = read_embedded_csv(&path).unwrap();
        assert_eq!(cloud, back);
    }

    #[test]
    fn diffmap_model_file_round_trips() {
        let cloud = Mat::from_row_iter(
            2,
            (0..30).map(|i| {
                let s = i as f64 * 0.2;
                vec![s.cos(), s.sin()]
            }),
        );
        let kernel = build_kernel(&cloud, 0.5, 6.0).unwrap();
        let model = fit_diffmap(&kernel, &cloud, 2, IsolatedPolicy::Keep).unwrap();
        let dir = tmpdir();
        let path = dir.path().join("model.csv");
        write_diffmap_model(&path, &model).unwrap();
        let back = read_diffmap_model(&path).unwrap();
        assert_eq!(model.sigma, back.sigma);
        assert_eq!(model.cutoff, back.cutoff);
        assert_eq!(model.r, back.r);
        assert_eq!(model.eigenvalues, back.eigenvalues);
        assert_eq!(model.eigenvectors, back.eigenvectors);
        assert_eq!(model.training, back.training);
        assert_eq!(model.kept, back.kept);
    }

    #[test]
    fn cells_csv_reader_accepts_oob() {
        let dir = tmpdir();
        let path = dir.path().join("cells.csv");
        std::fs::write(&path, "cell\n0\n1\noob\n1\n").unwrap();
        let cells = read_cells_csv(&path).unwrap();
        assert_eq!(cells, vec![Some(0), Some(1), None, Some(1)]);
    }
}
