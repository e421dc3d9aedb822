//! External systems behind a line-oriented subprocess protocol.
//!
//! For each point the driver writes `eval z_1 .. z_n` and the program
//! answers with one line holding `F(z)` (n numbers) followed by `DF(z)`
//! row by row (n^2 numbers). A reply starting with `error` aborts the
//! evaluation with its message. Requests are serialized, so replies never
//! interleave.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use whisker_core::{Matrix, Result, SymplecticSystem, WhiskerError};

use crate::config::PluginSection;

struct Pipe {
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct Plugin {
    dim: usize,
    angles: Vec<usize>,
    exact: bool,
    child: Mutex<Child>,
    pipe: Mutex<Pipe>,
}

fn external(msg: impl Into<String>) -> WhiskerError {
    WhiskerError::External(msg.into())
}

impl Plugin {
    pub fn spawn(cfg: &PluginSection, cwd: &std::path::Path) -> Result<Self> {
        let mut child = Command::new(&cfg.command[0])
            .args(&cfg.command[1..])
            .current_dir(cwd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| external(format!("cannot start `{}`: {e}", cfg.command[0])))?;
        let stdin = child.stdin.take().ok_or_else(|| external("no stdin"))?;
        let stdout = BufReader::new(child.stdout.take().ok_or_else(|| external("no stdout"))?);
        Ok(Self {
            dim: cfg.dim,
            angles: cfg.angles.clone(),
            exact: cfg.exact,
            child: Mutex::new(child),
            pipe: Mutex::new(Pipe { stdin, stdout }),
        })
    }

    fn eval(&self, z: &[f64]) -> Result<(Vec<f64>, Matrix<f64>)> {
        let n = self.dim;
        let mut request = String::from("eval");
        for x in z {
            request.push_str(&format!(" {x:e}"));
        }
        request.push('\n');
        let mut pipe = self.pipe.lock().map_err(|_| external("plugin lock poisoned"))?;
        pipe.stdin.write_all(request.as_bytes()).and_then(|_| pipe.stdin.flush()).map_err(|e| external(e.to_string()))?;
        let mut reply = String::new();
        let read = pipe.stdout.read_line(&mut reply).map_err(|e| external(e.to_string()))?;
        if read == 0 {
            return Err(external("plugin closed its output"));
        }
        let reply = reply.trim();
        if let Some(msg) = reply.strip_prefix("error") {
            return Err(external(msg.trim().to_string()));
        }
        let vals: std::result::Result<Vec<f64>, _> = reply.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| external(format!("unparsable reply: {e}")))?;
        if vals.len() != n + n * n {
            return Err(external(format!("expected {} numbers, got {}", n + n * n, vals.len())));
        }
        Ok((vals[..n].to_vec(), Matrix::from_row_slice(n, n, &vals[n..])))
    }
}

impl Drop for Plugin {
    fn drop(&mut self) {
        if let Ok(mut c) = self.child.lock() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

impl SymplecticSystem<f64> for Plugin {
    fn dim(&self) -> usize {
        self.dim
    }
    fn angles(&self) -> Vec<usize> {
        self.angles.clone()
    }
    fn map(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval(z)?.0)
    }
    fn jacobian(&self, z: &[f64]) -> Result<Matrix<f64>> {
        Ok(self.eval(z)?.1)
    }
    fn map_and_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, Matrix<f64>)> {
        self.eval(z)
    }
    fn exact(&self) -> bool {
        self.exact
    }
}
