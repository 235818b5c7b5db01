//! Boundary traces from trajectory CSV files (`t,E,V,trace...`).

use std::path::Path;

use anyhow::{bail, Context, Result};
use wavecert::pde::{BoundaryTrace, Grid};

pub struct TraceTable {
    pub times: Vec<f64>,
    pub columns: usize,
    pub samples: Vec<Vec<f64>>,
}

pub fn read(path: &Path) -> Result<TraceTable> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot read trace {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let t_col = headers
        .iter()
        .position(|h| h == "t")
        .with_context(|| format!("{}: no \"t\" column", path.display()))?;
    let cols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("trace"))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        bail!("{}: no trace columns", path.display());
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("{}:{}: bad number {s:?}", path.display(), row + 2))
        };
        times.push(num(t_col)?);
        samples.push(cols.iter().map(|&c| num(c)).collect::<Result<Vec<f64>>>()?);
    }
    if times.len() < 2 {
        bail!("{}: a trace needs at least two rows", path.display());
    }
    Ok(TraceTable {
        times,
        columns: cols.len(),
        samples,
    })
}

impl TraceTable {
    pub fn t0(&self) -> f64 {
        self.times[0]
    }

    /// Uniform sample spacing; rejects irregular time columns.
    pub fn dt(&self) -> Result<f64> {
        let m = self.times.len() - 1;
        let dt = (self.times[m] - self.times[0]) / m as f64;
        if !(dt > 0.0) {
            bail!("trace times must increase");
        }
        for (i, t) in self.times.iter().enumerate() {
            if (t - (self.times[0] + i as f64 * dt)).abs() > 1e-9 * dt.max(t.abs()) {
                bail!("trace times are not uniformly spaced (row {})", i + 2);
            }
        }
        Ok(dt)
    }

    pub fn horizon(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    pub fn into_trace(self, grid: &Grid) -> Result<BoundaryTrace> {
        let nodes = grid.neumann_nodes();
        if nodes.len() != self.columns {
            bail!(
                "trace has {} boundary columns, the grid has {} boundary nodes",
                self.columns,
                nodes.len()
            );
        }
        let dt = self.dt()?;
        Ok(BoundaryTrace::new(self.times[0], dt, nodes, self.samples)?)
    }
}
