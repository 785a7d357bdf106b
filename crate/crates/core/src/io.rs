//! MatrixMarket files, system bundles and reproducible number formatting.
//!
//! A system bundle is a directory holding a JSON manifest
//! `{"n", "m", "p", "A", "B", "C", "N"}` whose matrix entries name
//! MatrixMarket files relative to the manifest; a zero bilinear matrix may be
//! given as the literal string `"zero"`.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::sysmodel::BilinearSystem;

pub const MANIFEST: &str = "system.json";

/// Fixed 17-significant-digit scientific formatting.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes a matrix in MatrixMarket format, choosing the coordinate
/// layout when at most a quarter of the entries are nonzero.
pub fn write_matrix_market(m: &Mat) -> String {
    write_matrix_market_with(m, &[])
}

/// As [`write_matrix_market`], with `% key=value` comment lines after the header.
pub fn write_matrix_market_with(m: &Mat, tags: &[(String, String)]) -> String {
    let (r, c) = m.shape();
    let nnz = m.iter().filter(|x| **x != 0.0).count();
    let coordinate = r * c > 0 && nnz * 4 <= r * c;
    let mut out = String::from(if coordinate {
        "%%MatrixMarket matrix coordinate real general\n"
    } else {
        "%%MatrixMarket matrix array real general\n"
    });
    for (k, v) in tags {
        out.push_str(&format!("% {k}={v}\n"));
    }
    if coordinate {
        out.push_str(&format!("{r} {c} {nnz}\n"));
        for j in 0..c {
            for i in 0..r {
                let v = m[(i, j)];
                if v != 0.0 {
                    out.push_str(&format!("{} {} {}\n", i + 1, j + 1, fmt_num(v)));
                }
            }
        }
    } else {
        out.push_str(&format!("{r} {c}\n"));
        for v in m.iter() {
            out.push_str(&fmt_num(*v));
            out.push('\n');
        }
    }
    out
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

/// Parses a real general MatrixMarket matrix (array or coordinate layout).
pub fn read_matrix_market(text: &str) -> Result<Mat> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err("empty MatrixMarket file"))?;
    let tokens: Vec<String> = header.split_whitespace().map(|s| s.to_ascii_lowercase()).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(format!("bad MatrixMarket header '{header}'")));
    }
    let layout = tokens[2].as_str();
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(parse_err(format!("unsupported field '{}'", tokens[3])));
    }
    if tokens[4] != "general" {
        return Err(parse_err(format!("unsupported symmetry '{}'", tokens[4])));
    }
    let mut body = lines.map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('%'));
    let size_line = body.next().ok_or_else(|| parse_err("missing size line"))?;
    let dims: Vec<usize> = size_line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(format!("bad size entry '{t}'"))))
        .collect::<Result<_>>()?;
    let num = |t: &str| -> Result<f64> { t.parse().map_err(|_| parse_err(format!("bad number '{t}'"))) };
    match layout {
        "array" => {
            if dims.len() != 2 {
                return Err(parse_err("array layout needs 'rows cols'"));
            }
            let (r, c) = (dims[0], dims[1]);
            let vals: Vec<f64> = body.flat_map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>()).map(|t| num(&t)).collect::<Result<_>>()?;
            if vals.len() != r * c {
                return Err(parse_err(format!("expected {} entries, found {}", r * c, vals.len())));
            }
            Ok(Mat::from_column_slice(r, c, &vals))
        }
        "coordinate" => {
            if dims.len() != 3 {
                return Err(parse_err("coordinate layout needs 'rows cols nnz'"));
            }
            let (r, c, nnz) = (dims[0], dims[1], dims[2]);
            let mut m = Mat::zeros(r, c);
            let mut count = 0;
            for line in body {
                let t: Vec<&str> = line.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(parse_err(format!("bad coordinate entry '{line}'")));
                }
                let i: usize = t[0].parse().map_err(|_| parse_err(format!("bad row index '{}'", t[0])))?;
                let j: usize = t[1].parse().map_err(|_| parse_err(format!("bad column index '{}'", t[1])))?;
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(parse_err(format!("index ({i}, {j}) outside {r}x{c}")));
                }
                m[(i - 1, j - 1)] += num(t[2])?;
                count += 1;
            }
            if count != nnz {
                return Err(parse_err(format!("expected {nnz} entries, found {count}")));
            }
            Ok(m)
        }
        other => Err(parse_err(format!("unsupported layout '{other}'"))),
    }
}

/// Writes `sys` as a bundle into `dir` and returns the manifest path.
pub fn write_bundle(dir: &Path, sys: &BilinearSystem) -> Result<PathBuf> {
    write_bundle_with(dir, sys, &[])
}

/// As [`write_bundle`], recording `tags` as comments in every matrix file and
/// under the manifest key `"meta"`.
pub fn write_bundle_with(dir: &Path, sys: &BilinearSystem, tags: &[(String, String)]) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let write = |name: &str, m: &Mat| -> Result<()> { Ok(fs::write(dir.join(name), write_matrix_market_with(m, tags))?) };
    write("A.mtx", &sys.a)?;
    write("B.mtx", &sys.b)?;
    write("C.mtx", &sys.c)?;
    let mut n_entries = Vec::new();
    for (k, nk) in sys.n.iter().enumerate() {
        if nk.norm() == 0.0 {
            n_entries.push(Value::String("zero".into()));
        } else {
            let name = format!("N{}.mtx", k + 1);
            write(&name, nk)?;
            n_entries.push(Value::String(name));
        }
    }
    let mut manifest = json!({
        "n": sys.state_dim(),
        "m": sys.input_dim(),
        "p": sys.output_dim(),
        "A": "A.mtx",
        "B": "B.mtx",
        "C": "C.mtx",
        "N": n_entries,
    });
    if !tags.is_empty() {
        let meta: serde_json::Map<String, Value> = tags.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        manifest["meta"] = Value::Object(meta);
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(path)
}

/// Reads a bundle given its manifest path or the directory containing it.
pub fn read_bundle(path: &Path) -> Result<BilinearSystem> {
    let manifest_path = if path.is_dir() { path.join(MANIFEST) } else { path.to_path_buf() };
    let base = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest: Value = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let dim = |key: &str| -> Result<usize> {
        manifest
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| parse_err(format!("manifest lacks integer '{key}'")))
    };
    let (n, m, p) = (dim("n")?, dim("m")?, dim("p")?);
    let load = |key: &str| -> Result<Mat> {
        let file = manifest
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err(format!("manifest lacks file name '{key}'")))?;
        read_matrix_market(&fs::read_to_string(base.join(file))?)
    };
    let (a, b, c) = (load("A")?, load("B")?, load("C")?);
    let entries = manifest
        .get("N")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err("manifest lacks the 'N' list"))?;
    let mut nk = Vec::with_capacity(entries.len());
    for e in entries {
        let name = e.as_str().ok_or_else(|| parse_err("entries of 'N' must be strings"))?;
        if name == "zero" {
            nk.push(Mat::zeros(n, n));
        } else {
            nk.push(read_matrix_market(&fs::read_to_string(base.join(name))?)?);
        }
    }
    let sys = BilinearSystem::new(a, b, c, nk)?;
    if (sys.state_dim(), sys.input_dim(), sys.output_dim()) != (n, m, p) {
        return Err(Error::Dimension(format!(
            "manifest declares (n, m, p) = ({n}, {m}, {p}) but matrices give ({}, {}, {})",
            sys.state_dim(),
            sys.input_dim(),
            sys.output_dim()
        )));
    }
    Ok(sys)
}
