//! Data emission and input schema. Every float is written with 17
//! significant digits so that values survive a write/read cycle exactly.

use crate::error::{Result, SpectralError};
use crate::potential::{constant_potential, cosine_potential, make_potential, random_potential, vacuum, PeriodicPotential};
use num_complex::Complex64 as C64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use std::collections::BTreeMap;
use std::path::Path;

/// `x` in scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

struct Sig17;

impl Formatter for Sig17 {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        w.write_all(fmt_f64(v).as_bytes())
    }
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value
        .serialize(&mut ser)
        .map_err(|e| SpectralError::InvalidInput(format!("serialization failed: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?).map_err(|e| SpectralError::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| SpectralError::InvalidInput(format!("malformed JSON: {e}")))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| SpectralError::InvalidInput(format!("{}: {e}", path.display())))?;
    from_json(&text).map_err(|e| SpectralError::InvalidInput(format!("{}: {e}", path.display())))
}

/// One CSV cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

impl From<i64> for Field {
    fn from(v: i64) -> Self {
        Field::Int(v)
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as i64)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_string())
    }
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Int(i) => i.to_string(),
            Field::Float(x) => fmt_f64(*x),
            Field::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Field>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| SpectralError::InvalidInput(format!("csv: {e}"));
        w.write_record(&self.header).map_err(err)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Field::render)).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| SpectralError::InvalidInput(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv of UTF-8 fields"))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| SpectralError::InvalidInput(format!("{}: {e}", path.display())))
    }
}

/// Coefficient form of a potential: `{"J": 2, "u": [[j, re, im], ...], "uy": [...]}`.
/// Modes absent from the lists are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialJson {
    #[serde(rename = "J")]
    pub band_limit: usize,
    #[serde(default)]
    pub u: Vec<(i64, f64, f64)>,
    #[serde(default)]
    pub uy: Vec<(i64, f64, f64)>,
}

impl From<&PeriodicPotential> for PotentialJson {
    fn from(p: &PeriodicPotential) -> Self {
        let jj = p.band_limit() as i64;
        let modes = |f: &dyn Fn(i64) -> C64| (-jj..=jj).map(|j| (j, f(j).re, f(j).im)).collect();
        PotentialJson {
            band_limit: p.band_limit(),
            u: modes(&|j| p.u_coeff(j)),
            uy: modes(&|j| p.uy_coeff(j)),
        }
    }
}

impl PotentialJson {
    pub fn build(&self) -> Result<PeriodicPotential> {
        let jj = self.band_limit as i64;
        let dense = |modes: &[(i64, f64, f64)]| -> Result<Vec<C64>> {
            let mut v = vec![C64::new(0.0, 0.0); 2 * self.band_limit + 1];
            let mut seen = vec![false; v.len()];
            for &(j, re, im) in modes {
                if j.abs() > jj {
                    return Err(SpectralError::InvalidInput(format!("mode {j} exceeds J = {jj}")));
                }
                let i = (j + jj) as usize;
                if std::mem::replace(&mut seen[i], true) {
                    return Err(SpectralError::InvalidInput(format!("mode {j} given twice")));
                }
                v[i] = C64::new(re, im);
            }
            Ok(v)
        };
        PeriodicPotential::from_dense(dense(&self.u)?, dense(&self.uy)?)
    }
}

/// Input description of Cauchy data. Complex numbers are `[re, im]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Vacuum,
    /// u = amplitude·cos 2πx, u_y = 0.
    Cosine { amplitude: f64 },
    /// Constant data (u, u_y).
    Constant { u: C64, uy: C64 },
    /// Fourier modes (j, coefficient) of u and u_y.
    Modes {
        #[serde(default)]
        u: Vec<(i64, C64)>,
        #[serde(default)]
        uy: Vec<(i64, C64)>,
    },
    /// Explicit coefficients in the [`PotentialJson`] layout.
    Coefficients(PotentialJson),
    /// Coefficient file in the [`PotentialJson`] layout.
    File { path: std::path::PathBuf },
    /// Seeded random band-limited data.
    Random {
        seed: u64,
        band_limit: i64,
        amplitude: f64,
        decay_rate: f64,
    },
}

impl PotentialSpec {
    pub fn build(&self) -> Result<PeriodicPotential> {
        match self {
            PotentialSpec::Vacuum => Ok(vacuum()),
            PotentialSpec::Cosine { amplitude } => Ok(cosine_potential(*amplitude)),
            PotentialSpec::Constant { u, uy } => {
                if *uy == C64::new(0.0, 0.0) {
                    return Ok(constant_potential(*u));
                }
                let cu = BTreeMap::from([(0, *u)]);
                let cy = BTreeMap::from([(0, *uy)]);
                make_potential(&cu, &cy)
            }
            PotentialSpec::Modes { u, uy } => {
                let collect = |v: &[(i64, C64)]| -> Result<BTreeMap<i64, C64>> {
                    let mut m = BTreeMap::new();
                    for &(j, c) in v {
                        if m.insert(j, c).is_some() {
                            return Err(SpectralError::InvalidInput(format!("mode {j} given twice")));
                        }
                    }
                    Ok(m)
                };
                make_potential(&collect(u)?, &collect(uy)?)
            }
            PotentialSpec::Random {
                seed,
                band_limit,
                amplitude,
                decay_rate,
            } => random_potential(*seed, *band_limit, *amplitude, *decay_rate),
            PotentialSpec::Coefficients(c) => c.build(),
            PotentialSpec::File { path } => read_json::<PotentialJson>(path)?.build(),
        }
    }
}
