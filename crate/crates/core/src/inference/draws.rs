//! Plain-text draw files: one comma-separated row per draw with the chain id,
//! draw index, log-density and the natural parameters
//! (`mu_g_s` group-major, then `sigma_g`, `tau`, `theta`).

use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use super::InferenceError;
use crate::model::ModelParams;

fn header(r: usize, q: usize) -> String {
    let mut cols = vec!["chain".to_string(), "draw".into(), "log_density".into()];
    for g in 0..r {
        for s in 0..q {
            cols.push(format!("mu_{g}_{s}"));
        }
    }
    cols.extend((0..r).map(|g| format!("sigma_{g}")));
    cols.push("tau".into());
    cols.push("theta".into());
    cols.join(",")
}

fn write_row<W: Write>(w: &mut W, chain: usize, draw: usize, ld: f64, p: &ModelParams) -> std::io::Result<()> {
    write!(w, "{chain},{draw},{ld}")?;
    for g in 0..p.n_groups() {
        for s in 0..p.dim() {
            write!(w, ",{}", p.mu[(g, s)])?;
        }
    }
    for s in &p.sigma {
        write!(w, ",{s}")?;
    }
    writeln!(w, ",{},{}", p.tau, p.theta)
}

/// Writes a header and one row per draw. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_draws<W: Write>(
    mut w: W,
    chain: usize,
    params: &[ModelParams],
    log_densities: &[f64],
) -> Result<(), InferenceError> {
    if params.len() != log_densities.len() {
        return Err(InferenceError::Shape(format!(
            "{} draws, {} log-densities",
            params.len(),
            log_densities.len()
        )));
    }
    let (r, q) = params.first().map_or((0, 0), |p| p.mu.shape());
    writeln!(w, "{}", header(r, q))?;
    for (i, (p, &ld)) in params.iter().zip(log_densities).enumerate() {
        if p.mu.shape() != (r, q) || p.sigma.len() != r {
            return Err(InferenceError::Shape(format!("draw {i} has a different shape")));
        }
        write_row(&mut w, chain, i, ld, p)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawTable {
    pub chain: Vec<usize>,
    pub draw: Vec<usize>,
    pub log_density: Vec<f64>,
    pub params: Vec<ModelParams>,
    pub groups: usize,
    pub dim: usize,
}

impl DrawTable {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), InferenceError> {
        writeln!(w, "{}", header(self.groups, self.dim))?;
        for i in 0..self.len() {
            write_row(&mut w, self.chain[i], self.draw[i], self.log_density[i], &self.params[i])?;
        }
        Ok(())
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> InferenceError {
    InferenceError::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_draws<R: BufRead>(r: R) -> Result<DrawTable, InferenceError> {
    let mut lines = r.lines().enumerate();
    let (_, head) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let head = head?;
    let cols: Vec<&str> = head.trim().split(',').collect();
    let groups = cols.iter().filter(|c| c.starts_with("sigma_")).count();
    let n_mu = cols.iter().filter(|c| c.starts_with("mu_")).count();
    if groups == 0 || n_mu % groups != 0 {
        return Err(parse_err(1, "header does not describe a parameter set"));
    }
    let dim = n_mu / groups;
    if head.trim() != header(groups, dim) {
        return Err(parse_err(1, "unexpected column layout"));
    }
    let width = cols.len();
    let mut table = DrawTable {
        chain: Vec::new(),
        draw: Vec::new(),
        log_density: Vec::new(),
        params: Vec::new(),
        groups,
        dim,
    };
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != width {
            return Err(parse_err(line_no, format!("{} fields, expected {width}", fields.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| parse_err(line_no, format!("bad integer {s:?}")));
        let vals = fields[2..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(line_no, format!("bad number {s:?}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        table.chain.push(int(fields[0])?);
        table.draw.push(int(fields[1])?);
        table.log_density.push(vals[0]);
        let mu = DMatrix::from_row_slice(groups, dim, &vals[1..1 + n_mu]);
        let sigma = vals[1 + n_mu..1 + n_mu + groups].to_vec();
        table.params.push(ModelParams {
            mu,
            sigma,
            tau: vals[1 + n_mu + groups],
            theta: vals[2 + n_mu + groups],
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: f64) -> ModelParams {
        ModelParams {
            mu: DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0 / 3.0, 0.0, -k, 2.5e-17]),
            sigma: vec![0.1 * k, 1.0, 7.25],
            tau: std::f64::consts::PI,
            theta: 0.123456789012345,
        }
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let ps = vec![params(1.0), params(2.0), params(1e-300)];
        let lds = vec![-10.5, -1e6, f64::MIN_POSITIVE];
        let mut bytes = Vec::new();
        write_draws(&mut bytes, 4, &ps, &lds).unwrap();
        let table = read_draws(&bytes[..]).unwrap();
        assert_eq!(table.params, ps);
        assert_eq!(table.log_density, lds);
        assert_eq!(table.chain, vec![4; 3]);
        assert_eq!(table.draw, vec![0, 1, 2]);
        let mut again = Vec::new();
        table.write(&mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn header_layout() {
        assert_eq!(
            header(2, 1),
            "chain,draw,log_density,mu_0_0,mu_1_0,sigma_0,sigma_1,tau,theta"
        );
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(read_draws(&b""[..]).is_err());
        let good = format!("{}\n", header(1, 1));
        assert!(read_draws(good.as_bytes()).unwrap().is_empty());
        let short = format!("{}\n0,0,1.0,2.0\n", header(1, 1));
        assert!(matches!(read_draws(short.as_bytes()), Err(InferenceError::Parse { line: 2, .. })));
        let bad = format!("{}\n0,0,x,0,1,1,0.5\n", header(1, 1));
        assert!(read_draws(bad.as_bytes()).is_err());
    }
}
