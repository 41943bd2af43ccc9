//! Binary weight dump: `FPNL`, version u32, dimension u32, node count u64, then
//! the dense row-major matrix of little-endian f64 with w_ij off the diagonal
//! and e_i on it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use super::{table_dims, AssemblyConfig, NonlocalOperator, SeminormKind};
use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::special_fn::{c_flap, FracParams};

const MAGIC: &[u8; 4] = b"FPNL";
const VERSION: u32 = 1;

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::WeightFile { path: path.to_path_buf(), msg: msg.into() }
}

impl NonlocalOperator {
    pub fn write_fpnl(&self, path: &Path) -> Result<()> {
        let n = self.node_count();
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        out.write_all(&(n as u64).to_le_bytes())?;
        for i in 0..n {
            for j in 0..n {
                let v = if i == j { self.exterior[i] } else { self.pair_weight(i, j) };
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Load weights written by [`write_fpnl`](Self::write_fpnl) for `grid`.
    /// The pair block must be translation invariant and symmetric.
    pub fn read_fpnl(
        path: &Path,
        grid: Arc<Grid>,
        s: f64,
        p: f64,
        kind: SeminormKind,
        cfg: &AssemblyConfig,
    ) -> Result<NonlocalOperator> {
        let mut input = BufReader::new(File::open(path)?);
        let mut head = [0u8; 20];
        input.read_exact(&mut head).map_err(|_| bad(path, "truncated header"))?;
        if &head[0..4] != MAGIC {
            return Err(bad(path, "bad magic bytes"));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(bad(path, format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(head[12..20].try_into().unwrap()) as usize;
        if dim != grid.dim() || count != grid.node_count() {
            return Err(bad(path, format!("file holds n={dim}, {count} nodes; grid has n={}, {}", grid.dim(), grid.node_count())));
        }
        let params = FracParams::new(dim, s, p)?;
        let counts = grid.counts().to_vec();
        let tdims = table_dims(&counts);
        let mut table = vec![f64::NAN; tdims.iter().product()];
        table[tdims.iter().zip(&counts).fold(0, |acc, (t, c)| acc * t + c - 1)] = 0.0;
        let mut exterior = vec![0.0; count];
        let idx: Vec<Vec<usize>> = (0..count).map(|i| grid.multi_index(i)).collect();
        let mut buf = [0u8; 8];
        for i in 0..count {
            for j in 0..count {
                input.read_exact(&mut buf).map_err(|_| bad(path, "truncated matrix"))?;
                let v = f64::from_le_bytes(buf);
                if !v.is_finite() || v < 0.0 {
                    return Err(bad(path, format!("entry ({i},{j}) is {v}")));
                }
                if i == j {
                    exterior[i] = v;
                    continue;
                }
                let t = idx[i].iter().zip(&idx[j]).zip(tdims.iter().zip(&counts)).fold(0, |acc, ((&a, &b), (td, c))| {
                    acc * td + (b + c - 1 - a)
                });
                if table[t].is_nan() {
                    table[t] = v;
                } else if table[t] != v {
                    return Err(bad(path, format!("entry ({i},{j}) breaks translation invariance")));
                }
            }
        }
        if kind == SeminormKind::Regional && exterior.iter().any(|&e| e != 0.0) {
            return Err(bad(path, "regional weights must have a zero diagonal"));
        }
        if kind == SeminormKind::Dirichlet && exterior.iter().any(|&e| e <= 0.0) {
            return Err(bad(path, "dirichlet weights need a positive diagonal"));
        }
        let op = NonlocalOperator {
            grid,
            s,
            p,
            kind,
            cfg: cfg.clone(),
            constant: c_flap(&params)?,
            table,
            exterior,
            row_sums: OnceLock::new(),
        };
        for i in 0..count {
            for j in 0..i {
                if op.pair_weight(i, j) != op.pair_weight(j, i) {
                    return Err(bad(path, "pair weights are not symmetric"));
                }
            }
        }
        Ok(op)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::domain::{build_grid, DomainSpec, Interval};

    #[test]
    fn round_trip() {
        let d = DomainSpec::boxed(vec![Interval::new(0.0, 1.0).unwrap(), Interval::new(0.0, 0.75).unwrap()]).unwrap();
        let g = Arc::new(build_grid(&d, 0.25).unwrap());
        let op = assemble(g.clone(), 0.4, 2.5, SeminormKind::Dirichlet, &AssemblyConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.fpnl");
        op.write_fpnl(&path).unwrap();
        let back = NonlocalOperator::read_fpnl(&path, g.clone(), 0.4, 2.5, SeminormKind::Dirichlet, &AssemblyConfig::default()).unwrap();
        assert_eq!(back.table, op.table);
        assert_eq!(back.exterior, op.exterior);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"FPNL");
        assert_eq!(bytes.len(), 20 + 8 * 12 * 12);

        let other = Arc::new(build_grid(&d, 0.125).unwrap());
        assert!(NonlocalOperator::read_fpnl(&path, other, 0.4, 2.5, SeminormKind::Dirichlet, &AssemblyConfig::default()).is_err());

        let mut broken = bytes.clone();
        broken[20 + 8] ^= 1;
        std::fs::write(&path, &broken).unwrap();
        assert!(NonlocalOperator::read_fpnl(&path, g, 0.4, 2.5, SeminormKind::Dirichlet, &AssemblyConfig::default()).is_err());
    }
}
