//! SDPA sparse format (`.dat-s`).
//!
//! SDPA states its primal as `min cᵀx  s.t.  X = Σ Fᵢxᵢ − F₀ ⪰ 0`, so the
//! matrix written as `matno 0` is the negated constant of [`LmiBlock`].
//! Values use Rust's shortest round-trip exponent form, so a write followed
//! by a read reproduces every coefficient bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{LmiBlock, SdpProblem};
use crate::matrixcore::SymMatrix;

#[derive(Debug, Error)]
pub enum SdpaError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub fn write_sdpa(problem: &SdpProblem, comment: &str) -> String {
    let mut s = String::new();
    let comment = comment.replace('\n', " ");
    let _ = writeln!(s, "\"{comment}\"");
    let _ = writeln!(s, "{} = mDIM", problem.num_vars);
    let _ = writeln!(s, "{} = nBLOCK", problem.blocks.len());
    let sizes: Vec<String> = problem.blocks.iter().map(|b| b.dim.to_string()).collect();
    let _ = writeln!(s, "{} = bLOCKsTRUCT", sizes.join(" "));
    let c: Vec<String> = problem.objective.iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(s, "{}", c.join(" "));
    for (k, b) in problem.blocks.iter().enumerate() {
        for j in 0..b.dim {
            for i in 0..=j {
                let v = b.constant[(i, j)];
                if v != 0.0 {
                    let _ = writeln!(s, "0 {} {} {} {:e}", k + 1, i + 1, j + 1, -v);
                }
            }
        }
    }
    let mut entries: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (k, b) in problem.blocks.iter().enumerate() {
        for (var, coef) in &b.coefficients {
            for &(i, j, v) in coef {
                if v != 0.0 {
                    entries.push((var + 1, k + 1, i + 1, j + 1, v));
                }
            }
        }
    }
    entries.sort_by(|a, b| (a.0, a.1, a.2, a.3).cmp(&(b.0, b.1, b.2, b.3)));
    for (m, k, i, j, v) in entries {
        let _ = writeln!(s, "{m} {k} {i} {j} {v:e}");
    }
    s
}

pub fn export_sdpa(problem: &SdpProblem, path: &Path, comment: &str) -> Result<(), SdpaError> {
    fs::write(path, write_sdpa(problem, comment))?;
    Ok(())
}

pub fn import_sdpa(path: &Path) -> Result<SdpProblem, SdpaError> {
    read_sdpa(&fs::read_to_string(path)?)
}

/// Parses SDPA sparse text. Negative block sizes (LP blocks) are expanded
/// into that many 1×1 blocks.
pub fn read_sdpa(text: &str) -> Result<SdpProblem, SdpaError> {
    let is_sep = |c: char| c.is_whitespace() || matches!(c, ',' | '{' | '}' | '(' | ')');
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
        .skip_while(|(_, l)| l.starts_with('"') || l.starts_with('*'));
    let err = |line: usize, msg: &str| SdpaError::Parse { line, msg: msg.to_string() };
    let mut header = |what: &str| -> Result<(usize, Vec<String>), SdpaError> {
        let (n, l) = lines.next().ok_or_else(|| err(0, &format!("missing {what}")))?;
        let toks: Vec<String> = l
            .split(is_sep)
            .filter(|t| !t.is_empty())
            .take_while(|t| !t.starts_with('='))
            .map(str::to_string)
            .collect();
        Ok((n, toks))
    };

    let (n, t) = header("mDIM")?;
    let m: usize = t.first().and_then(|s| s.parse().ok()).ok_or_else(|| err(n, "bad mDIM"))?;
    let (n, t) = header("nBLOCK")?;
    let nblock: usize = t.first().and_then(|s| s.parse().ok()).ok_or_else(|| err(n, "bad nBLOCK"))?;
    let (n, t) = header("bLOCKsTRUCT")?;
    let raw: Vec<i64> = t
        .iter()
        .take(nblock)
        .map(|s| s.parse().map_err(|_| err(n, "bad block size")))
        .collect::<Result<_, _>>()?;
    if raw.len() != nblock || raw.contains(&0) {
        return Err(err(n, "block structure does not match nBLOCK"));
    }

    // SDPA block index → (first expanded block, is_lp)
    let mut map = Vec::with_capacity(nblock);
    let mut dims = Vec::new();
    for &s in &raw {
        map.push((dims.len(), s < 0));
        if s < 0 {
            dims.extend(std::iter::repeat_n(1, s.unsigned_abs() as usize));
        } else {
            dims.push(s as usize);
        }
    }

    let mut c = Vec::with_capacity(m);
    while c.len() < m {
        let (n, l) = lines.next().ok_or_else(|| err(0, "missing objective vector"))?;
        for tok in l.split(is_sep).filter(|t| !t.is_empty()) {
            if c.len() < m {
                c.push(tok.parse::<f64>().map_err(|_| err(n, "bad objective entry"))?);
            }
        }
    }

    let mut blocks: Vec<LmiBlock> = dims.iter().map(|&d| LmiBlock::new(SymMatrix::zeros(d))).collect();
    for (n, l) in lines {
        let toks: Vec<&str> = l.split(is_sep).filter(|t| !t.is_empty()).collect();
        if toks.len() < 5 {
            return Err(err(n, "entry needs 5 fields"));
        }
        let ints: Vec<usize> = toks[..4]
            .iter()
            .map(|s| s.parse().map_err(|_| err(n, "bad index")))
            .collect::<Result<_, _>>()?;
        let v: f64 = toks[4].parse().map_err(|_| err(n, "bad value"))?;
        let (matno, blk, i, j) = (ints[0], ints[1], ints[2], ints[3]);
        if matno > m || blk == 0 || blk > nblock || i == 0 || j == 0 {
            return Err(err(n, "index out of range"));
        }
        let (first, lp) = map[blk - 1];
        let (target, i, j) = if lp {
            if i != j {
                return Err(err(n, "off-diagonal entry in LP block"));
            }
            (first + i - 1, 0, 0)
        } else {
            (first, i - 1, j - 1)
        };
        if target >= blocks.len() || i >= blocks[target].dim || j >= blocks[target].dim {
            return Err(err(n, "entry outside block"));
        }
        let b = &mut blocks[target];
        if matno == 0 {
            b.constant[(i, j)] = -v;
            b.constant[(j, i)] = -v;
        } else {
            b.add_entry(matno - 1, i, j, v);
        }
    }
    for b in &mut blocks {
        for (_, e) in &mut b.coefficients {
            e.sort_by_key(|&(i, j, _)| (j, i));
        }
    }
    Ok(SdpProblem {
        num_vars: m,
        objective: c,
        blocks,
    })
}

/// Canonical form used for round-trip comparison: entries sorted, zeros dropped.
#[cfg(test)]
fn canonical(p: &SdpProblem) -> SdpProblem {
    let mut p = p.clone();
    for b in &mut p.blocks {
        for (_, e) in &mut b.coefficients {
            e.retain(|x| x.2 != 0.0);
            e.sort_by_key(|&(i, j, _)| (j, i));
        }
        b.coefficients.retain(|(_, e)| !e.is_empty());
        b.constant = crate::matrixcore::DenseMatrix::from_fn(b.dim, b.dim, |i, j| b.constant[(i.min(j), i.max(j))]);
    }
    p
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    #[test]
    fn min_x_file_layout() {
        let text = write_sdpa(&min_x(), "min x");
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "1 = mDIM");
        assert_eq!(lines[2], "1 = nBLOCK");
        assert_eq!(lines[3], "2 = bLOCKsTRUCT");
        assert_eq!(lines[4], "1e0");
        assert_eq!(&lines[5..], &["0 1 1 2 -1e0", "1 1 1 1 1e0", "1 1 2 2 1e0"]);
    }

    #[test]
    fn reads_hand_written_file() {
        let text = "\"min x\"\n1 =mDIM\n1 =nBLOCK\n2 =bLOCKsTRUCT\n{1.0}\n0 1 1 2 -1.0\n1 1 1 1 1.0\n1 1 2 2 1.0\n";
        let p = read_sdpa(text).unwrap();
        assert_eq!(canonical(&p), canonical(&min_x()));
    }

    #[test]
    fn lp_blocks_expand() {
        let text = "2\n1\n-2\n1 1\n0 1 1 1 1\n0 1 2 2 2\n1 1 1 1 1\n2 1 2 2 1\n";
        let p = read_sdpa(text).unwrap();
        assert_eq!(p.blocks.len(), 2);
        assert_eq!(p.blocks[0].constant[(0, 0)], -1.0);
        assert_eq!(p.blocks[1].constant[(0, 0)], -2.0);
        assert_eq!(p.blocks[0].coefficients, vec![(0, vec![(0, 0, 1.0)])]);
        assert_eq!(p.blocks[1].coefficients, vec![(1, vec![(0, 0, 1.0)])]);
    }

    #[test]
    fn round_trip_is_exact() {
        let mut p = diagonal_lp();
        p.objective = vec![0.1 + 0.2, -1.0 / 3.0];
        p.blocks[0].constant[(0, 0)] = std::f64::consts::PI;
        p.blocks[0].add_entry(0, 0, 1, 1e-300);
        let back = read_sdpa(&write_sdpa(&p, "x")).unwrap();
        assert_eq!(canonical(&back), canonical(&p));
    }

    #[test]
    fn feasibility_problem_has_zero_objective() {
        let text = write_sdpa(&constant_infeasible(), "");
        assert_eq!(text.lines().nth(4).unwrap(), "0e0");
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_sdpa("1\n1\n2\n1\n0 1 3 3 1\n").is_err());
        assert!(read_sdpa("x\n").is_err());
    }
}
