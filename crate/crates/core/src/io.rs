//! CSV and JSON input/output.

use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::counts::CountMatrix;
use crate::diagnostics::DrawSet;
use crate::error::{invalid, Error, Result};
use crate::mcmc::{AdaptationResult, FitOutput, Theta};
use crate::regression::MatchData;

pub const MATCH_HEADER: [&str; 3] = ["home_goals", "away_goals", "pandemic"];

/// Header plus non-negative integer cells.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<u32>>,
}

impl IntegerTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// The listed columns, in the given order.
    pub fn select(&self, cols: &[usize]) -> Vec<Vec<u32>> {
        self.rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect()
    }
}

/// Reads a headed CSV of non-negative integers. Errors carry the 1-based file line.
pub fn read_integer_table<R: Read>(input: R) -> Result<IntegerTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).flexible(true).from_reader(input);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "missing or empty column names".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != names.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", names.len(), rec.len()),
            });
        }
        let row = rec
            .iter()
            .zip(&names)
            .map(|(cell, name)| {
                cell.parse::<u32>().map_err(|_| Error::Parse {
                    line,
                    message: format!("column {name}: '{cell}' is not a non-negative integer"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    Ok(IntegerTable { names, rows })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_counts_csv(path: &Path) -> Result<(Vec<String>, CountMatrix)> {
    let t = read_integer_table(open(path)?)?;
    let m = CountMatrix::from_rows(&t.rows)?;
    Ok((t.names, m))
}

/// Counts plus 0/1 covariate columns, the covariates picked out by name.
pub fn read_covariate_csv(path: &Path, covariate_names: &[String]) -> Result<(CountMatrix, Vec<Vec<f64>>)> {
    let t = read_integer_table(open(path)?)?;
    let cov_idx = covariate_names
        .iter()
        .map(|n| t.column_index(n).ok_or_else(|| invalid(format!("{}: missing covariate column {n}", path.display()))))
        .collect::<Result<Vec<_>>>()?;
    let count_idx: Vec<usize> = (0..t.names.len()).filter(|i| !cov_idx.contains(i)).collect();
    for (r, row) in t.rows.iter().enumerate() {
        if cov_idx.iter().any(|&c| row[c] > 1) {
            return Err(Error::Parse {
                line: r + 2,
                message: "covariates must be 0 or 1".into(),
            });
        }
    }
    let counts = CountMatrix::from_rows(&t.select(&count_idx))?;
    let cov = t.select(&cov_idx).into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect();
    Ok((counts, cov))
}

/// Match CSV with header `home_goals,away_goals,pandemic`.
pub fn read_match_csv<R: Read>(input: R) -> Result<MatchData> {
    let t = read_integer_table(input)?;
    if t.names != MATCH_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}, found {}", MATCH_HEADER.join(","), t.names.join(",")),
        });
    }
    let mut pandemic = Vec::with_capacity(t.rows.len());
    for (r, row) in t.rows.iter().enumerate() {
        if row[2] > 1 {
            return Err(Error::Parse {
                line: r + 2,
                message: format!("pandemic must be 0 or 1, found {}", row[2]),
            });
        }
        pandemic.push(row[2] as u8);
    }
    Ok(MatchData {
        goals: CountMatrix::from_rows(&t.select(&[0, 1]))?,
        pandemic,
    })
}

pub fn write_counts_csv(path: &Path, names: &[String], counts: &CountMatrix, extra: Option<(&str, &[u8])>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    if let Some((name, _)) = extra {
        header.push(name);
    }
    w.write_record(&header)?;
    for (i, row) in counts.iter_rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(u32::to_string).collect();
        if let Some((_, col)) = extra {
            rec.push(col[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn draws_path(dir: &Path, chain: usize) -> PathBuf {
    dir.join(format!("draws_chain{chain}.csv"))
}

/// One `draws_chain<k>.csv` per chain: `iteration` then one column per parameter.
pub fn write_draws(dir: &Path, fit: &FitOutput) -> Result<()> {
    for c in &fit.chains {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(draws_path(dir, c.chain))?));
        let mut header = vec!["iteration".to_string()];
        header.extend(fit.parameter_names.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in c.draws.chunks_exact(c.n_params).enumerate() {
            let mut rec = vec![(fit.settings.burn_in + i + 1).to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn read_draws_file(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("iteration") || header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: format!("{}: expected 'iteration' followed by parameter columns", path.display()),
        });
    }
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        for cell in rec.iter().skip(1) {
            values.push(cell.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("'{cell}' is not a number"),
            })?);
        }
    }
    Ok((header[1..].to_vec(), values))
}

/// Reads `draws_chain0.csv`, `draws_chain1.csv`, … until the first gap.
pub fn read_draws_dir(dir: &Path) -> Result<DrawSet> {
    let mut names: Option<Vec<String>> = None;
    let mut chains = Vec::new();
    for k in 0.. {
        let path = draws_path(dir, k);
        if !path.exists() {
            break;
        }
        let (n, v) = read_draws_file(&path)?;
        match &names {
            Some(prev) if *prev != n => return Err(invalid(format!("{}: parameter columns differ from chain 0", path.display()))),
            Some(_) => {}
            None => names = Some(n),
        }
        chains.push(v);
    }
    let names = names.ok_or_else(|| invalid(format!("no draws_chain<k>.csv files in {}", dir.display())))?;
    DrawSet::new(names, chains)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMetadata {
    pub chain: usize,
    pub stream_index: usize,
    pub n_z: usize,
    pub adaptation: Option<AdaptationResult>,
    /// Post burn-in acceptance rate per parameter block; `None` for skipped blocks.
    pub acceptance: Vec<(String, Option<f64>)>,
    pub soft_failures: usize,
    pub initial: Theta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub master_seed: u64,
    pub engine: String,
    pub n_chains: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub n_r: usize,
    pub n_obs: usize,
    pub data: Option<PathBuf>,
    pub chains: Vec<ChainMetadata>,
}

impl RunMetadata {
    pub fn from_fit(fit: &FitOutput, n_obs: usize, data: Option<PathBuf>) -> Self {
        let chains = fit
            .chains
            .iter()
            .map(|c| ChainMetadata {
                chain: c.chain,
                stream_index: c.chain,
                n_z: c.n_z,
                adaptation: c.adaptation.clone(),
                acceptance: fit
                    .parameter_names
                    .iter()
                    .zip(&c.acceptance)
                    .map(|(n, &a)| (n.clone(), if a.is_nan() { None } else { Some(a) }))
                    .collect(),
                soft_failures: c.soft_failures,
                initial: c.initial.clone(),
            })
            .collect();
        Self {
            master_seed: fit.settings.seed,
            engine: fit.engine.as_str().into(),
            n_chains: fit.chains.len(),
            n_iter: fit.settings.n_iter,
            burn_in: fit.settings.burn_in,
            n_r: fit.settings.n_r,
            n_obs,
            data,
            chains,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}
