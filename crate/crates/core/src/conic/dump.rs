//! Plain-text program dump for debugging and cross-solver comparison.
//!
//! ```text
//! conic-program 1
//! vars <n> equalities <p> psd <k> soc <q> nonneg <r>
//! offset <value>
//! objective <nnz>
//! <var> <value>                 (nnz lines)
//! equalities <nnz>
//! <row> <var> <value>           (nnz lines)
//! rhs
//! <value>                       (p lines)
//! psd <dim> constant <nc> coeffs <na>
//! <row> <col> <value>           (nc lines, row >= col)
//! <var> <row> <col> <value>     (na lines)
//! soc <dim> coeffs <na>
//! <value>                       (dim lines: constant vector)
//! <row> <var> <value>           (na lines)
//! nonneg
//! <var>                         (r lines)
//! ```
//!
//! Matrix entries are stored unscaled; values use the shortest decimal form
//! that parses back to the identical `f64`.

use std::fmt::Write as _;

use super::{ConicProgram, PsdBlock, SocConstraint};
use crate::error::{Error, Result};

pub fn write_program(p: &ConicProgram) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "conic-program 1");
    let _ = writeln!(
        s,
        "vars {} equalities {} psd {} soc {} nonneg {}",
        p.num_vars,
        p.eq_rhs.len(),
        p.psd_blocks.len(),
        p.soc_constraints.len(),
        p.nonneg_vars.len()
    );
    let _ = writeln!(s, "offset {:?}", p.objective_offset);
    let nz: Vec<_> = p.objective.iter().enumerate().filter(|(_, v)| **v != 0.0).collect();
    let _ = writeln!(s, "objective {}", nz.len());
    for (i, v) in nz {
        let _ = writeln!(s, "{i} {v:?}");
    }
    let _ = writeln!(s, "equalities {}", p.equalities.len());
    for (r, c, v) in &p.equalities {
        let _ = writeln!(s, "{r} {c} {v:?}");
    }
    let _ = writeln!(s, "rhs");
    for v in &p.eq_rhs {
        let _ = writeln!(s, "{v:?}");
    }
    for b in &p.psd_blocks {
        let _ = writeln!(s, "psd {} constant {} coeffs {}", b.dim, b.constant.len(), b.coeffs.len());
        for (i, j, v) in &b.constant {
            let _ = writeln!(s, "{i} {j} {v:?}");
        }
        for (var, i, j, v) in &b.coeffs {
            let _ = writeln!(s, "{var} {i} {j} {v:?}");
        }
    }
    for c in &p.soc_constraints {
        let _ = writeln!(s, "soc {} coeffs {}", c.dim, c.coeffs.len());
        for v in &c.constant {
            let _ = writeln!(s, "{v:?}");
        }
        for (r, var, v) in &c.coeffs {
            let _ = writeln!(s, "{r} {var} {v:?}");
        }
    }
    let _ = writeln!(s, "nonneg");
    for v in &p.nonneg_vars {
        let _ = writeln!(s, "{v}");
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self) -> Result<(usize, Vec<&'a str>)> {
        loop {
            let (no, line) = self.inner.next().ok_or_else(|| Error::Parse("unexpected end of program dump".into()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if !fields.is_empty() {
                return Ok((no + 1, fields));
            }
        }
    }

    fn expect(&mut self, keyword: &str, n: usize) -> Result<Vec<&'a str>> {
        let (no, f) = self.next_fields()?;
        if f.first() != Some(&keyword) {
            return Err(Error::Parse(format!("line {no}: expected '{keyword}'")));
        }
        if f.len() != n {
            return Err(Error::Parse(format!("line {no}: expected {n} fields")));
        }
        Ok(f)
    }

    fn record(&mut self, n: usize) -> Result<(usize, Vec<&'a str>)> {
        let (no, f) = self.next_fields()?;
        if f.len() != n {
            return Err(Error::Parse(format!("line {no}: expected {n} fields, found {}", f.len())));
        }
        Ok((no, f))
    }
}

fn num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse(format!("line {line}: cannot parse '{s}'")))
}

pub fn read_program(text: &str) -> Result<ConicProgram> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    let head = lines.expect("conic-program", 2)?;
    if head[1] != "1" {
        return Err(Error::Parse(format!("unsupported format version {}", head[1])));
    }
    let dims = lines.expect("vars", 10)?;
    let n: usize = num(dims[1], 2)?;
    let p_eq: usize = num(dims[3], 2)?;
    let k_psd: usize = num(dims[5], 2)?;
    let q_soc: usize = num(dims[7], 2)?;
    let r_nn: usize = num(dims[9], 2)?;

    let mut p = ConicProgram { num_vars: n, objective: vec![0.0; n], ..Default::default() };
    let off = lines.expect("offset", 2)?;
    p.objective_offset = num(off[1], 3)?;
    let obj = lines.expect("objective", 2)?;
    for _ in 0..num::<usize>(obj[1], 4)? {
        let (no, f) = lines.record(2)?;
        let i: usize = num(f[0], no)?;
        if i >= n {
            return Err(Error::Parse(format!("line {no}: variable out of range")));
        }
        p.objective[i] = num(f[1], no)?;
    }
    let eq = lines.expect("equalities", 2)?;
    for _ in 0..num::<usize>(eq[1], 0)? {
        let (no, f) = lines.record(3)?;
        p.equalities.push((num(f[0], no)?, num(f[1], no)?, num(f[2], no)?));
    }
    lines.expect("rhs", 1)?;
    for _ in 0..p_eq {
        let (no, f) = lines.record(1)?;
        p.eq_rhs.push(num(f[0], no)?);
    }
    for _ in 0..k_psd {
        let (no, f) = lines.next_fields()?;
        if f.len() != 6 || f[0] != "psd" {
            return Err(Error::Parse(format!("line {no}: expected psd header")));
        }
        let mut b = PsdBlock::new(num(f[1], no)?);
        for _ in 0..num::<usize>(f[3], no)? {
            let (no, g) = lines.record(3)?;
            b.constant.push((num(g[0], no)?, num(g[1], no)?, num(g[2], no)?));
        }
        for _ in 0..num::<usize>(f[5], no)? {
            let (no, g) = lines.record(4)?;
            b.coeffs.push((num(g[0], no)?, num(g[1], no)?, num(g[2], no)?, num(g[3], no)?));
        }
        p.psd_blocks.push(b);
    }
    for _ in 0..q_soc {
        let (no, f) = lines.next_fields()?;
        if f.len() != 4 || f[0] != "soc" {
            return Err(Error::Parse(format!("line {no}: expected soc header")));
        }
        let mut c = SocConstraint::new(num(f[1], no)?);
        for i in 0..c.dim {
            let (no, g) = lines.record(1)?;
            c.constant[i] = num(g[0], no)?;
        }
        for _ in 0..num::<usize>(f[3], no)? {
            let (no, g) = lines.record(3)?;
            c.coeffs.push((num(g[0], no)?, num(g[1], no)?, num(g[2], no)?));
        }
        p.soc_constraints.push(c);
    }
    lines.expect("nonneg", 1)?;
    for _ in 0..r_nn {
        let (no, f) = lines.record(1)?;
        p.nonneg_vars.push(num(f[0], no)?);
    }
    p.validate().map_err(Error::Parse)?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut p = ConicProgram::new();
        let a = p.add_var(0.1);
        let b = p.add_var(-1.0 / 3.0);
        p.objective_offset = std::f64::consts::PI;
        p.add_equality(&[(a, 1e-300), (b, 2.0f64.sqrt())], 7.25);
        let mut blk = PsdBlock::new(3);
        blk.add_constant(2, 1, 1.0 / 7.0);
        blk.add_coeff(a, 0, 2, -5e-17);
        p.psd_blocks.push(blk);
        let mut soc = SocConstraint::new(2);
        soc.constant[0] = 0.3;
        soc.add_coeff(1, b, 123456.789);
        p.soc_constraints.push(soc);
        p.nonneg_vars.push(b);
        let text = write_program(&p);
        let q = read_program(&text).unwrap();
        assert_eq!(p, q);
        assert_eq!(write_program(&q), text);
    }

    #[test]
    fn truncated_dump_is_an_error() {
        let mut p = ConicProgram::new();
        p.add_var(1.0);
        let text = write_program(&p);
        let cut = &text[..text.len() - 8];
        assert!(read_program(cut).is_err());
    }
}
