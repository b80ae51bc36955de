//! On-disk factor sets: a directory of KT31 files plus `manifest.txt`.
//!
//! The manifest is plain `key=value` text. Single-valued records
//! (`scheme=dp`, `k=3`, …) come first, then one line per factor:
//!
//! ```text
//! factor=mix file=mix.kt31 dims=6x3
//! ```
//!
//! Shift-form factor sets double as shift-module directories: `w_in.kt31`
//! (`m × ci`), `shifts.kt31` (`m`, integral float32 values) and `w_out.kt31`
//! (`co × m`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::decompose::{CpdFactors, DpFactors, Factors, PdFactors, ShiftLayerFactors};
use crate::error::{Error, Result};
use crate::kt31;
use crate::matrix::Matrix;
use crate::prune::ShiftModule;
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.txt";
pub const FORMAT: &str = "tensorview-factors";
/// Version of the flattening conventions (spatial `j = ky·k + kx`, mode-n
/// unfolding order) the factors were produced under.
pub const CONVENTIONS: u32 = 1;
pub const REFERENCE_FILE: &str = "reference.kt31";

#[derive(Debug, Clone, PartialEq)]
pub struct StoredFactors {
    pub factors: Factors,
    /// Dense `[ci, co, k, k]` kernel the factors were checked against when
    /// written, if one was stored.
    pub reference: Option<Tensor>,
}

fn factor_files(f: &Factors) -> Vec<(&'static str, Tensor)> {
    let m = |role: &'static str, m: &Matrix| {
        let t = Tensor::new(vec![m.rows(), m.cols()], m.data().to_vec())
            .expect("matrix extents are positive");
        (role, t)
    };
    match f {
        Factors::Dp(f) => vec![m("spatial", &f.spatial), m("mix", &f.mix)],
        Factors::Pd(f) => vec![m("mix", &f.mix), m("spatial", &f.spatial)],
        Factors::Cpd(f) => vec![m("a", &f.a), m("b", &f.b), m("c", &f.c)],
        Factors::Shift(f) => {
            let shifts = f.shifts().iter().map(|&s| s as f64).collect();
            vec![
                m("w_in", &f.entry_weights()),
                (
                    "shifts",
                    Tensor::new(vec![f.terms.len()], shifts).expect("at least one term"),
                ),
                m("w_out", &f.exit_weights()),
            ]
        }
    }
}

fn dims_string(dims: &[usize]) -> String {
    dims.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

pub fn write_factors(
    dir: impl AsRef<Path>,
    factors: &Factors,
    reference: Option<&Tensor>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let [ci, co, k] = factors.kernel_dims()?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "format={FORMAT}");
    let _ = writeln!(manifest, "conventions={CONVENTIONS}");
    let _ = writeln!(manifest, "scheme={}", factors.scheme());
    let _ = writeln!(manifest, "ci={ci}");
    let _ = writeln!(manifest, "co={co}");
    let _ = writeln!(manifest, "k={k}");
    if let Some(r) = factors.rank() {
        let _ = writeln!(manifest, "rank={r}");
    }
    let _ = writeln!(manifest, "params={}", factors.param_count());
    if let Some(reference) = reference {
        kt31::write(dir.join(REFERENCE_FILE), reference)?;
        let _ = writeln!(manifest, "reference={REFERENCE_FILE}");
    }
    for (role, tensor) in factor_files(factors) {
        let file = format!("{role}.kt31");
        kt31::write(dir.join(&file), &tensor)?;
        let _ = writeln!(
            manifest,
            "factor={role} file={file} dims={}",
            dims_string(tensor.dims())
        );
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

struct Manifest {
    fields: BTreeMap<String, String>,
    /// role → (file, dims)
    factors: BTreeMap<String, (String, String)>,
}

impl Manifest {
    fn parse(text: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        let mut factors = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let err = |message: String| Error::Parse {
                line: n + 1,
                message,
            };
            let mut pairs = BTreeMap::new();
            let mut first = None;
            for token in line.split_whitespace() {
                let (key, value) = token
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected key=value, got {token:?}")))?;
                first.get_or_insert(key);
                pairs.insert(key, value);
            }
            match first {
                None => continue,
                Some("factor") => {
                    let get = |key: &str| {
                        pairs
                            .get(key)
                            .map(|v| v.to_string())
                            .ok_or_else(|| err(format!("factor record lacks {key}")))
                    };
                    factors.insert(get("factor")?, (get("file")?, get("dims")?));
                }
                Some(key) => {
                    if pairs.len() != 1 {
                        return Err(err(format!("unexpected fields after {key}")));
                    }
                    fields.insert(key.to_string(), pairs[key].to_string());
                }
            }
        }
        Ok(Manifest { fields, factors })
    }

    fn field(&self, key: &str) -> Result<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::format(format!("manifest lacks {key}")))
    }

    fn usize_field(&self, key: &str) -> Result<usize> {
        let v = self.field(key)?;
        v.parse()
            .map_err(|_| Error::format(format!("manifest {key}={v} is not an integer")))
    }

    fn load(&self, dir: &Path, role: &str) -> Result<Tensor> {
        let (file, dims) = self
            .factors
            .get(role)
            .ok_or_else(|| Error::format(format!("manifest lists no {role} factor")))?;
        let t = kt31::read(dir.join(file))?;
        if dims_string(t.dims()) != *dims {
            return Err(Error::format(format!(
                "{file} has dims {}, manifest says {dims}",
                dims_string(t.dims())
            )));
        }
        Ok(t)
    }

    fn matrix(&self, dir: &Path, role: &str, rows: usize, cols: usize) -> Result<Matrix> {
        let t = self.load(dir, role)?;
        if t.dims() != [rows, cols] {
            return Err(Error::format(format!(
                "{role} factor is {}, expected {rows}x{cols}",
                dims_string(t.dims())
            )));
        }
        Matrix::new(rows, cols, t.into_data())
    }
}

pub fn read_factors(dir: impl AsRef<Path>) -> Result<StoredFactors> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest = Manifest::parse(&text)?;
    if manifest.field("format")? != FORMAT {
        return Err(Error::format("not a factor manifest"));
    }
    let conventions = manifest.usize_field("conventions")?;
    if conventions != CONVENTIONS as usize {
        return Err(Error::format(format!(
            "factors use conventions version {conventions}, this build reads {CONVENTIONS}"
        )));
    }
    let (ci, co, k) = (
        manifest.usize_field("ci")?,
        manifest.usize_field("co")?,
        manifest.usize_field("k")?,
    );
    let kk = k * k;
    let factors = match manifest.field("scheme")? {
        "dp" => Factors::Dp(DpFactors {
            spatial: manifest.matrix(dir, "spatial", ci, kk)?,
            mix: manifest.matrix(dir, "mix", co, ci)?,
        }),
        "pd" => Factors::Pd(PdFactors {
            mix: manifest.matrix(dir, "mix", co, ci)?,
            spatial: manifest.matrix(dir, "spatial", co, kk)?,
        }),
        "pdp" => {
            let r = manifest.usize_field("rank")?;
            Factors::Cpd(CpdFactors {
                a: manifest.matrix(dir, "a", ci, r)?,
                b: manifest.matrix(dir, "b", co, r)?,
                c: manifest.matrix(dir, "c", kk, r)?,
            })
        }
        "shift" => {
            let m = manifest.usize_field("rank")?;
            let shifts = decode_shifts(&manifest.load(dir, "shifts")?, m, kk)?;
            Factors::Shift(ShiftLayerFactors::from_weights(
                &manifest.matrix(dir, "w_in", m, ci)?,
                &shifts,
                &manifest.matrix(dir, "w_out", co, m)?,
                k,
            )?)
        }
        other => return Err(Error::format(format!("unknown scheme {other:?}"))),
    };
    let reference = match manifest.fields.get("reference") {
        Some(file) => {
            let t = kt31::read(dir.join(file))?;
            if t.dims() != [ci, co, k, k] {
                return Err(Error::format(format!(
                    "reference kernel is {}, expected {ci}x{co}x{k}x{k}",
                    dims_string(t.dims())
                )));
            }
            Some(t)
        }
        None => None,
    };
    Ok(StoredFactors { factors, reference })
}

fn decode_shifts(t: &Tensor, m: usize, kk: usize) -> Result<Vec<usize>> {
    if t.dims() != [m] {
        return Err(Error::format(format!(
            "shifts tensor is {}, expected {m}",
            dims_string(t.dims())
        )));
    }
    t.data()
        .iter()
        .map(|&v| {
            if v.fract() != 0.0 || v < 0.0 || v >= kk as f64 {
                Err(Error::format(format!(
                    "shift value {v} is not an integer in [0, {kk})"
                )))
            } else {
                Ok(v as usize)
            }
        })
        .collect()
}

pub fn write_module(dir: impl AsRef<Path>, module: &ShiftModule) -> Result<()> {
    write_factors(dir, &Factors::Shift(module.to_factors()), None)
}

pub fn read_module(dir: impl AsRef<Path>) -> Result<ShiftModule> {
    match read_factors(dir)?.factors {
        Factors::Shift(f) => ShiftModule::from_factors(&f),
        other => Err(Error::format(format!(
            "expected a shift module, found {} factors",
            other.scheme()
        ))),
    }
}
