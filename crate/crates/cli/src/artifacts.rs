//! Files written by a run. Every writer produces the same bytes for the
//! same inputs.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use whisker_core::bundles::Splitting;
use whisker_core::cohomology::{DiophantineCertificate, FrequencyKind};
use whisker_core::fourier::{read_coefficients, write_coefficients};
use whisker_core::newton::NewtonRecord;
use whisker_core::{Embedding, Matrix, TorusSolution};

/// Metadata stored next to a coefficient file (`torus.fourier` ->
/// `torus.json`). The coefficient file holds the periodic part of `K`; the
/// winding matrix restores the lift.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub dim: usize,
    pub winding: Vec<Vec<f64>>,
    pub omega: Vec<f64>,
    pub kind: FrequencyKind,
    pub lambda: Vec<f64>,
    pub residual: Option<f64>,
    pub converged: bool,
    #[serde(default)]
    pub certificate: Option<DiophantineCertificate>,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl Sidecar {
    pub fn of(sol: &TorusSolution<f64>, cert: Option<&DiophantineCertificate>, error: Option<String>) -> Self {
        let w = &sol.k.winding;
        Self {
            dim: sol.k.dim(),
            winding: (0..w.rows()).map(|i| (0..w.cols()).map(|j| w[(i, j)]).collect()).collect(),
            omega: sol.omega.omega.clone(),
            kind: sol.omega.kind,
            lambda: sol.lambda.clone(),
            residual: Some(sol.residual).filter(|r| r.is_finite()),
            converged: sol.converged,
            certificate: cert.cloned(),
            error,
            extra: Default::default(),
        }
    }

    pub fn winding(&self) -> Matrix<f64> {
        let rows = self.winding.len();
        let cols = self.winding.first().map_or(0, Vec::len);
        Matrix::from_fn(rows, cols, |i, j| self.winding[i][j])
    }
}

pub fn sidecar_path(torus: &Path) -> PathBuf {
    torus.with_extension("json")
}

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(name);
        let mut f = fs::File::create(&p).with_context(|| format!("cannot write {}", p.display()))?;
        f.write_all(bytes)?;
        Ok(p)
    }

    pub fn json<S: Serialize>(&self, name: &str, value: &S) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// `<stem>.fourier` plus its `<stem>.json` sidecar.
    pub fn torus(&self, stem: &str, sol: &TorusSolution<f64>, side: &Sidecar) -> Result<()> {
        let mut buf = Vec::new();
        write_coefficients(&sol.k.periodic, &mut buf)?;
        self.write(&format!("{stem}.fourier"), &buf)?;
        self.json(&format!("{stem}.json"), side)?;
        Ok(())
    }

    pub fn report(&self, name: &str, records: &[NewtonRecord]) -> Result<()> {
        let mut s = String::new();
        for r in records {
            s.push_str(&r.to_json());
            s.push('\n');
        }
        self.write(name, s.as_bytes())?;
        Ok(())
    }

    /// One coefficient file per projection, entries row-major as components.
    pub fn splitting(&self, split: &Splitting<f64>) -> Result<()> {
        for (tag, p) in [("s", &split.proj_s), ("c", &split.proj_c), ("u", &split.proj_u)] {
            let mut buf = Vec::new();
            write_coefficients(&p.to_fourier()?, &mut buf)?;
            self.write(&format!("splitting_{tag}.fourier"), &buf)?;
        }
        Ok(())
    }

    /// Grid samples `theta, K(theta)` for plotting.
    pub fn samples(&self, k: &Embedding<f64>) -> Result<()> {
        let g = k.grid();
        let mut s = String::new();
        let head: Vec<String> = (1..=g.dim())
            .map(|i| format!("theta_{i}"))
            .chain((1..=k.dim()).map(|i| format!("K_{i}")))
            .collect();
        s.push_str(&head.join(","));
        s.push('\n');
        for (i, p) in k.points().iter().enumerate() {
            let row: Vec<String> =
                g.theta(i).iter().map(|t| format!("{t:.16e}")).chain(p.iter().map(|x| format!("{x:.16e}"))).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        self.write("samples.csv", s.as_bytes())?;
        Ok(())
    }

    pub fn text(&self, name: &str, text: &str) -> Result<()> {
        self.write(name, text.as_bytes())?;
        Ok(())
    }
}

/// A stored torus and its sidecar, when there is one.
pub fn read_torus(path: &Path) -> Result<(whisker_core::FourierMap<f64>, Option<Sidecar>)> {
    let f = fs::File::open(path).with_context(|| format!("cannot open torus file {}", path.display()))?;
    let map = read_coefficients(BufReader::new(f)).with_context(|| format!("in {}", path.display()))?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let text = fs::read_to_string(&side)?;
        Some(serde_json::from_str(&text).with_context(|| format!("in {}", side.display()))?)
    } else {
        None
    };
    Ok((map, meta))
}
