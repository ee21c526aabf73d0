//! JSON cache of oracle solutions keyed by a content hash of the instance.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::primal::{solve_primal_small, OracleMethod, OracleSolution};
use crate::error::{Error, Result};
use crate::problem::{Coupling, ProblemInstance};

/// SHA-256 over the weights, cost entries and `eps`, as little-endian bits.
pub fn instance_hash(inst: &ProblemInstance) -> String {
    let mut h = Sha256::new();
    h.update((inst.n() as u64).to_le_bytes());
    h.update((inst.m() as u64).to_le_bytes());
    for x in inst.pw().iter().chain(inst.qw()).chain(inst.cost().iter()) {
        h.update(x.to_bits().to_le_bytes());
    }
    h.update(inst.eps().to_bits().to_le_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedSolution {
    hash: String,
    n: usize,
    m: usize,
    entries: Vec<(usize, usize, f64)>,
    primal_value: f64,
    method: OracleMethod,
    tolerance_achieved: f64,
}

pub fn cache_path(dir: &Path, inst: &ProblemInstance) -> PathBuf {
    dir.join(format!("oracle-{}.json", instance_hash(inst)))
}

/// Reads the cached solution for `inst` from `dir`, or solves and stores it.
pub fn solve_cached(inst: &ProblemInstance, dir: &Path) -> Result<OracleSolution> {
    let path = cache_path(dir, inst);
    let hash = instance_hash(inst);
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(c) = serde_json::from_str::<CachedSolution>(&text) {
            if c.hash == hash {
                return Ok(OracleSolution {
                    coupling: Coupling {
                        n: c.n,
                        m: c.m,
                        entries: c.entries,
                    },
                    primal_value: c.primal_value,
                    method: c.method,
                    tolerance_achieved: c.tolerance_achieved,
                });
            }
        }
    }
    let sol = solve_primal_small(inst)?;
    let c = CachedSolution {
        hash,
        n: sol.coupling.n,
        m: sol.coupling.m,
        entries: sol.coupling.entries.clone(),
        primal_value: sol.primal_value,
        method: sol.method,
        tolerance_achieved: sol.tolerance_achieved,
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let text = serde_json::to_string_pretty(&c).map_err(|e| Error::parse(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(sol)
}
