//! Observed data, CSV ingestion/export, and standardization.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column roles: outcome `y`, exposure `x`, negative-control exposure `z`,
/// negative-control outcome `w`, measured confounders, and (simulation only)
/// the hidden confounder `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub covariates: Vec<Covariate>,
    pub u_hidden: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Covariate {
    pub name: String,
    pub values: Vec<f64>,
}

impl Dataset {
    /// Builds and validates a dataset without covariates.
    pub fn new(y: Vec<f64>, x: Vec<f64>, z: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let d = Dataset {
            y,
            x,
            z,
            w,
            covariates: Vec::new(),
            u_hidden: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_u(mut self, u: Vec<f64>) -> Result<Self> {
        self.u_hidden = Some(u);
        self.validate()?;
        Ok(self)
    }

    pub fn with_covariate(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        self.covariates.push(Covariate {
            name: name.into(),
            values,
        });
        self.validate()?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn without_u(&self) -> Dataset {
        Dataset {
            u_hidden: None,
            ..self.clone()
        }
    }

    fn columns(&self) -> Vec<(&str, &[f64])> {
        let mut cols: Vec<(&str, &[f64])> = vec![
            ("y", &self.y),
            ("x", &self.x),
            ("z", &self.z),
            ("w", &self.w),
        ];
        for c in &self.covariates {
            cols.push((c.name.as_str(), &c.values));
        }
        if let Some(u) = &self.u_hidden {
            cols.push(("u", u));
        }
        cols
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Validation("dataset has no rows".into()));
        }
        for (name, col) in self.columns() {
            if col.len() != n {
                return Err(Error::Validation(format!(
                    "column '{name}' has {} values, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "column '{name}' has a non-finite value at row {i}"
                )));
            }
        }
        let first = self.x[0];
        if self.x.iter().all(|&v| v == first) {
            return Err(Error::Validation(
                "exposure x has fewer than 2 distinct values; quantile cutpoints are undefined"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Writes the dataset as CSV with header `y,x,z,w[,covariates...][,u]`.
    ///
    /// Values use the shortest decimal representation that round-trips.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let cols = self.columns();
        let map_err = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e));
        wtr.write_record(cols.iter().map(|(name, _)| *name))
            .map_err(map_err)?;
        let mut row = Vec::with_capacity(cols.len());
        for i in 0..self.n() {
            row.clear();
            row.extend(cols.iter().map(|(_, c)| format!("{}", c[i])));
            wtr.write_record(&row).map_err(map_err)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| match e {
                Error::Io { source, .. } => Error::io(path, source),
                other => other,
            })
    }
}

/// Which CSV header names play which role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub y: String,
    pub x: String,
    pub z: String,
    pub w: String,
    pub covariates: Vec<String>,
    /// Hidden confounder column; loaded when present in the file. Required
    /// only by the U-adjusted benchmark model.
    pub u: Option<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            y: "y".into(),
            x: "x".into(),
            z: "z".into(),
            w: "w".into(),
            covariates: Vec::new(),
            u: Some("u".into()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    /// 1-based data-row indices dropped for missing values.
    pub dropped_rows: Vec<usize>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL" | ".")
}

/// Reads a headed CSV. Rows with a missing mapped value are dropped and
/// reported; any other non-numeric cell is an error.
pub fn read_csv<R: Read>(input: R, map: &ColumnMap) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Config(format!("cannot read CSV header: {e}")))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("column '{name}' not found in CSV header")))
    };
    let mut names: Vec<String> = vec![map.y.clone(), map.x.clone(), map.z.clone(), map.w.clone()];
    names.extend(map.covariates.iter().cloned());
    let mut idx = names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
    let u_idx = map
        .u
        .as_deref()
        .and_then(|u| headers.iter().position(|h| h == u));
    if let (Some(i), Some(u)) = (u_idx, map.u.as_ref()) {
        idx.push(i);
        names.push(u.clone());
    }
    let unique: BTreeSet<usize> = idx.iter().copied().collect();
    if unique.len() != idx.len() {
        return Err(Error::Config("one CSV column is mapped to two roles".into()));
    }

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); idx.len()];
    let mut dropped = Vec::new();
    let mut values = vec![0.0; idx.len()];
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let mut missing = false;
        for (j, &c) in idx.iter().enumerate() {
            let cell = rec.get(c).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                continue;
            }
            values[j] = cell.parse::<f64>().map_err(|e| Error::Parse {
                row,
                column: names[j].clone(),
                message: format!("'{cell}' is not a number ({e})"),
            })?;
            if !values[j].is_finite() {
                missing = true;
            }
        }
        if missing {
            dropped.push(row);
            continue;
        }
        for (col, &v) in cols.iter_mut().zip(&values) {
            col.push(v);
        }
    }

    let mut it = cols.into_iter();
    let y = it.next().unwrap_or_default();
    let x = it.next().unwrap_or_default();
    let z = it.next().unwrap_or_default();
    let w = it.next().unwrap_or_default();
    let covariates = map
        .covariates
        .iter()
        .map(|name| Covariate {
            name: name.clone(),
            values: it.next().unwrap_or_default(),
        })
        .collect();
    let u_hidden = if u_idx.is_some() { it.next() } else { None };
    let dataset = Dataset {
        y,
        x,
        z,
        w,
        covariates,
        u_hidden,
    };
    dataset.validate()?;
    Ok(Loaded {
        dataset,
        dropped_rows: dropped,
    })
}

pub fn load_csv(path: &Path, map: &ColumnMap) -> Result<Loaded> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file), map)
}

/// `v ↦ (v − center) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub center: f64,
    pub scale: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine {
        center: 0.0,
        scale: 1.0,
    };

    fn fit(name: &str, v: &[f64]) -> Result<Self> {
        let n = v.len();
        if n < 2 {
            return Err(Error::ZeroVariance(name.to_string()));
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) || sd <= 1e-14 * mean.abs() {
            return Err(Error::ZeroVariance(name.to_string()));
        }
        Ok(Affine {
            center: mean,
            scale: sd,
        })
    }

    #[inline]
    pub fn forward(&self, v: f64) -> f64 {
        (v - self.center) / self.scale
    }

    #[inline]
    pub fn inverse(&self, v: f64) -> f64 {
        self.center + self.scale * v
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|&a| self.forward(a)).collect()
    }
}

/// Per-column transforms taking original data to the analysis scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub y: Affine,
    pub x: Affine,
    pub z: Affine,
    pub w: Affine,
    pub covariates: Vec<Affine>,
    pub u: Option<Affine>,
}

impl Standardization {
    pub fn identity(d: &Dataset) -> Self {
        Standardization {
            y: Affine::IDENTITY,
            x: Affine::IDENTITY,
            z: Affine::IDENTITY,
            w: Affine::IDENTITY,
            covariates: vec![Affine::IDENTITY; d.n_covariates()],
            u: d.u_hidden.as_ref().map(|_| Affine::IDENTITY),
        }
    }

    pub fn apply(&self, d: &Dataset) -> Dataset {
        Dataset {
            y: self.y.apply(&d.y),
            x: self.x.apply(&d.x),
            z: self.z.apply(&d.z),
            w: self.w.apply(&d.w),
            covariates: d
                .covariates
                .iter()
                .zip(&self.covariates)
                .map(|(c, t)| Covariate {
                    name: c.name.clone(),
                    values: t.apply(&c.values),
                })
                .collect(),
            u_hidden: match (&d.u_hidden, &self.u) {
                (Some(u), Some(t)) => Some(t.apply(u)),
                (u, _) => u.clone(),
            },
        }
    }

    pub fn invert(&self, d: &Dataset) -> Dataset {
        let inv = |t: &Affine, v: &[f64]| v.iter().map(|&a| t.inverse(a)).collect::<Vec<_>>();
        Dataset {
            y: inv(&self.y, &d.y),
            x: inv(&self.x, &d.x),
            z: inv(&self.z, &d.z),
            w: inv(&self.w, &d.w),
            covariates: d
                .covariates
                .iter()
                .zip(&self.covariates)
                .map(|(c, t)| Covariate {
                    name: c.name.clone(),
                    values: inv(t, &c.values),
                })
                .collect(),
            u_hidden: match (&d.u_hidden, &self.u) {
                (Some(u), Some(t)) => Some(inv(t, u)),
                (u, _) => u.clone(),
            },
        }
    }
}

/// Centers and scales every column to sample mean 0 and SD 1 (n − 1 denominator).
pub fn standardize(d: &Dataset) -> Result<(Dataset, Standardization)> {
    let t = Standardization {
        y: Affine::fit("y", &d.y)?,
        x: Affine::fit("x", &d.x)?,
        z: Affine::fit("z", &d.z)?,
        w: Affine::fit("w", &d.w)?,
        covariates: d
            .covariates
            .iter()
            .map(|c| Affine::fit(&c.name, &c.values))
            .collect::<Result<_>>()?,
        u: d.u_hidden.as_deref().map(|u| Affine::fit("u", u)).transpose()?,
    };
    Ok((t.apply(d), t))
}
