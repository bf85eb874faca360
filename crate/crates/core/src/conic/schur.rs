//! Standard-form problem data and the normal-equations system `𝒜ᵀΩ𝒜 Δx = r`
//! solved at every interior-point iteration.
//!
//! Two structural features keep paper-scale programs tractable:
//! * PSD coefficient matrices of the form `e_q fᵀ + f e_qᵀ` ("arrows") are
//!   priced in closed form from `R F` and `Fᵀ R F`, where `F` stacks the
//!   distinct vectors `f`, instead of forming `R A_j R` per variable;
//! * variables that live in exactly one second-order cone and otherwise only
//!   in scalar inequalities are eliminated before factorisation.

use std::collections::{BTreeMap, HashMap};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt;
use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Accum, Mat, MatMut, Par};

use super::cones::{gemm, ConeVec, Layout, Scaling};

#[derive(Debug, Clone)]
pub(crate) struct LinRow {
    pub h: f64,
    pub coeffs: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct SocCone {
    pub h: Vec<f64>,
    pub vars: Vec<usize>,
    /// `dim × vars.len()` coefficients, column-major.
    pub a: Vec<f64>,
}

impl SocCone {
    fn dim(&self) -> usize {
        self.h.len()
    }
    fn col(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.a[k * d..(k + 1) * d]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Arrow {
    pub var: usize,
    pub q: usize,
    pub f: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct General {
    pub var: usize,
    /// Entries of the full symmetric matrix (both triangles).
    pub entries: Vec<(usize, usize, f64)>,
    pub support: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct PsdCone {
    pub dim: usize,
    pub h: Mat<f64>,
    pub arrows: Vec<Arrow>,
    pub generals: Vec<General>,
    pub fvecs: Vec<Vec<(usize, f64)>>,
    pub fdense: Mat<f64>,
}

impl PsdCone {
    /// `constant` and `per_var` hold lower-triangle entries; duplicates add up.
    pub fn build(
        dim: usize,
        constant: &[(usize, usize, f64)],
        per_var: BTreeMap<usize, Vec<(usize, usize, f64)>>,
    ) -> Self {
        let mut h = Mat::zeros(dim, dim);
        for &(i, j, v) in constant {
            h[(i, j)] += v;
            if i != j {
                h[(j, i)] += v;
            }
        }
        let mut arrows = Vec::new();
        let mut generals = Vec::new();
        let mut fvecs: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut fkey: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();
        for (var, raw) in per_var {
            let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for (i, j, v) in raw {
                *merged.entry((i, j)).or_insert(0.0) += v;
            }
            merged.retain(|_, v| *v != 0.0);
            if merged.is_empty() {
                continue;
            }
            match arrow_of(&merged) {
                Some((q, f)) => {
                    let key: Vec<(usize, u64)> = f.iter().map(|&(i, v)| (i, v.to_bits())).collect();
                    let next = fvecs.len();
                    let id = *fkey.entry(key).or_insert(next);
                    if id == next {
                        fvecs.push(f);
                    }
                    arrows.push(Arrow { var, q, f: id });
                }
                None => {
                    let mut entries = Vec::with_capacity(2 * merged.len());
                    let mut support = Vec::new();
                    for (&(i, j), &v) in &merged {
                        entries.push((i, j, v));
                        if i != j {
                            entries.push((j, i, v));
                        }
                        support.push(i);
                        support.push(j);
                    }
                    support.sort_unstable();
                    support.dedup();
                    generals.push(General { var, entries, support });
                }
            }
        }
        let mut fdense = Mat::zeros(dim, fvecs.len());
        for (k, f) in fvecs.iter().enumerate() {
            for &(i, v) in f {
                fdense[(i, k)] = v;
            }
        }
        Self { dim, h, arrows, generals, fvecs, fdense }
    }

    fn apply_into(&self, x: &[f64], out: &mut Mat<f64>) {
        for a in &self.arrows {
            let xv = x[a.var];
            if xv == 0.0 {
                continue;
            }
            for &(i, v) in &self.fvecs[a.f] {
                out[(a.q, i)] += xv * v;
                out[(i, a.q)] += xv * v;
            }
        }
        for g in &self.generals {
            let xv = x[g.var];
            if xv == 0.0 {
                continue;
            }
            for &(i, j, v) in &g.entries {
                out[(i, j)] += xv * v;
            }
        }
    }

    fn adjoint_into(&self, z: &Mat<f64>, out: &mut [f64]) {
        for a in &self.arrows {
            let zc = z.col_as_slice(a.q);
            let s: f64 = self.fvecs[a.f].iter().map(|&(i, v)| v * zc[i]).sum();
            out[a.var] += 2.0 * s;
        }
        for g in &self.generals {
            out[g.var] += g.entries.iter().map(|&(i, j, v)| v * z[(i, j)]).sum::<f64>();
        }
    }
}

/// Recognises `A = e_q fᵀ + f e_qᵀ` with `f_q = 0`.
fn arrow_of(entries: &BTreeMap<(usize, usize), f64>) -> Option<(usize, Vec<(usize, f64)>)> {
    let mut cand: Option<Vec<usize>> = None;
    for &(i, j) in entries.keys() {
        if i == j {
            return None;
        }
        cand = Some(match cand {
            None => vec![i.min(j), i.max(j)],
            Some(c) => c.into_iter().filter(|&q| q == i || q == j).collect(),
        });
        if cand.as_ref().is_some_and(|c| c.is_empty()) {
            return None;
        }
    }
    let q = *cand?.iter().min()?;
    let mut f: Vec<(usize, f64)> = entries.iter().map(|(&(i, j), &v)| (if i == q { j } else { i }, v)).collect();
    f.sort_by_key(|e| e.0);
    Some((q, f))
}

#[derive(Debug, Clone)]
pub(crate) struct StdProblem {
    pub n: usize,
    pub c: Vec<f64>,
    pub lin: Vec<LinRow>,
    pub soc: Vec<SocCone>,
    pub psd: Vec<PsdCone>,
    pub layout: Layout,
}

impl StdProblem {
    pub fn new(n: usize, c: Vec<f64>, lin: Vec<LinRow>, soc: Vec<SocCone>, psd: Vec<PsdCone>) -> Self {
        let layout = Layout {
            lin: lin.len(),
            soc: soc.iter().map(|s| s.dim()).collect(),
            psd: psd.iter().map(|p| p.dim).collect(),
        };
        Self { n, c, lin, soc, psd, layout }
    }

    pub fn h(&self) -> ConeVec {
        ConeVec {
            lin: self.lin.iter().map(|r| r.h).collect(),
            soc: self.soc.iter().map(|s| s.h.clone()).collect(),
            psd: self.psd.iter().map(|p| p.h.clone()).collect(),
        }
    }

    /// `𝒜 x`.
    pub fn apply(&self, x: &[f64]) -> ConeVec {
        let mut out = ConeVec::zeros(&self.layout);
        for (k, r) in self.lin.iter().enumerate() {
            out.lin[k] = r.coeffs.iter().map(|&(v, a)| a * x[v]).sum();
        }
        for (k, s) in self.soc.iter().enumerate() {
            for (col, &v) in s.vars.iter().enumerate() {
                let xv = x[v];
                if xv != 0.0 {
                    for (o, a) in out.soc[k].iter_mut().zip(s.col(col)) {
                        *o += a * xv;
                    }
                }
            }
        }
        for (k, p) in self.psd.iter().enumerate() {
            p.apply_into(x, &mut out.psd[k]);
        }
        out
    }

    /// `𝒜ᵀ z`.
    pub fn adjoint(&self, z: &ConeVec) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (k, r) in self.lin.iter().enumerate() {
            for &(v, a) in &r.coeffs {
                out[v] += a * z.lin[k];
            }
        }
        for (k, s) in self.soc.iter().enumerate() {
            for (col, &v) in s.vars.iter().enumerate() {
                out[v] += s.col(col).iter().zip(&z.soc[k]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        for (k, p) in self.psd.iter().enumerate() {
            p.adjoint_into(&z.psd[k], &mut out);
        }
        out
    }

    /// `𝒜ᵀ Ω 𝒜 x`.
    pub fn normal_apply(&self, sc: &Scaling, x: &[f64]) -> Vec<f64> {
        self.adjoint(&sc.omega(&self.apply(x)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarKind {
    Core(usize),
    Aux(usize),
    Unused,
}

/// Variable classification and index maps, fixed for the whole solve.
#[derive(Debug, Clone)]
pub(crate) struct Structure {
    kind: Vec<VarKind>,
    n_core: usize,
    aux_cone: Vec<usize>,
    aux_col: Vec<usize>,
    /// Rows of `ℒ` (scalar rows touching auxiliaries) each auxiliary appears in.
    aux_rows: Vec<Vec<(usize, f64)>>,
    soc_core: Vec<Vec<(usize, usize)>>,
    soc_aux: Vec<Option<usize>>,
    l_rows: Vec<usize>,
    plain_rows: Vec<usize>,
    /// Per PSD cone: arrow indices sorted by core index.
    arrow_order: Vec<Vec<usize>>,
}

impl Structure {
    pub fn analyse(p: &StdProblem) -> Self {
        let n = p.n;
        let mut psd_count = vec![0usize; n];
        let mut soc_of: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut in_lin = vec![false; n];
        for cone in &p.psd {
            for a in &cone.arrows {
                psd_count[a.var] += 1;
            }
            for g in &cone.generals {
                psd_count[g.var] += 1;
            }
        }
        for (k, s) in p.soc.iter().enumerate() {
            for (col, &v) in s.vars.iter().enumerate() {
                soc_of[v].push((k, col));
            }
        }
        for r in &p.lin {
            for &(v, _) in &r.coeffs {
                in_lin[v] = true;
            }
        }
        let mut kind = vec![VarKind::Unused; n];
        let mut soc_aux: Vec<Option<usize>> = vec![None; p.soc.len()];
        let mut aux_cone = Vec::new();
        let mut aux_col = Vec::new();
        for v in 0..n {
            if psd_count[v] == 0 && soc_of[v].len() == 1 {
                let (k, col) = soc_of[v][0];
                if soc_aux[k].is_none() {
                    soc_aux[k] = Some(aux_cone.len());
                    kind[v] = VarKind::Aux(aux_cone.len());
                    aux_cone.push(k);
                    aux_col.push(col);
                }
            }
        }
        let mut n_core = 0;
        for v in 0..n {
            if kind[v] == VarKind::Unused && (psd_count[v] > 0 || !soc_of[v].is_empty() || in_lin[v]) {
                kind[v] = VarKind::Core(n_core);
                n_core += 1;
            }
        }
        let soc_core = p
            .soc
            .iter()
            .map(|s| {
                s.vars
                    .iter()
                    .enumerate()
                    .filter_map(|(col, &v)| match kind[v] {
                        VarKind::Core(c) => Some((col, c)),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        let mut l_rows = Vec::new();
        let mut plain_rows = Vec::new();
        let mut aux_rows = vec![Vec::new(); aux_cone.len()];
        for (k, r) in p.lin.iter().enumerate() {
            let touches = r.coeffs.iter().any(|&(v, _)| matches!(kind[v], VarKind::Aux(_)));
            if touches {
                let l = l_rows.len();
                for &(v, a) in &r.coeffs {
                    if let VarKind::Aux(ai) = kind[v] {
                        aux_rows[ai].push((l, a));
                    }
                }
                l_rows.push(k);
            } else {
                plain_rows.push(k);
            }
        }
        let arrow_order = p
            .psd
            .iter()
            .map(|cone| {
                let mut idx: Vec<usize> = (0..cone.arrows.len()).collect();
                idx.sort_by_key(|&i| match kind[cone.arrows[i].var] {
                    VarKind::Core(c) => c,
                    _ => usize::MAX,
                });
                idx
            })
            .collect();
        Self { kind, n_core, aux_cone, aux_col, aux_rows, soc_core, soc_aux, l_rows, plain_rows, arrow_order }
    }

    pub fn n_aux(&self) -> usize {
        self.aux_cone.len()
    }
    pub fn is_unused(&self, v: usize) -> bool {
        self.kind[v] == VarKind::Unused
    }
}

/// Factorised normal equations for one scaling.
pub(crate) struct Factor {
    chol: Mat<f64>,
    d: Vec<f64>,
    u: Vec<Vec<f64>>,
    b: Mat<f64>,
    kchol: Mat<f64>,
}

#[inline]
fn add_lower(m: &mut MatMut<'_, f64>, i: usize, j: usize, v: f64) {
    if i >= j {
        m[(i, j)] += v;
    } else {
        m[(j, i)] += v;
    }
}

fn cholesky_in_place(m: &mut Mat<f64>) -> bool {
    let n = m.nrows();
    let par = Par::Seq;
    let mut buf = MemBuffer::new(llt::factor::cholesky_in_place_scratch::<f64>(n, par, Default::default()));
    let stack = MemStack::new(&mut buf);
    llt::factor::cholesky_in_place(m.as_mut(), Default::default(), par, stack, Default::default()).is_ok()
}

fn chol_solve(l: &Mat<f64>, rhs: &mut Mat<f64>) {
    let mut buf = MemBuffer::new(llt::solve::solve_in_place_scratch::<f64>(l.nrows(), rhs.ncols(), Par::Seq));
    let stack = MemStack::new(&mut buf);
    llt::solve::solve_in_place(l.as_ref(), rhs.as_mut(), Par::Seq, stack);
}

fn col_vec(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

impl Structure {
    /// Assembles and factorises the reduced normal matrix; `reg` is added to
    /// its diagonal. Returns `None` if the factorisation breaks down.
    pub fn factor(&self, p: &StdProblem, sc: &Scaling, reg: f64) -> Option<Factor> {
        let nc = self.n_core;
        let mut m = Mat::<f64>::zeros(nc, nc);
        {
            let mut mm = m.as_mut();
            for (k, cone) in p.psd.iter().enumerate() {
                self.add_psd(cone, &self.arrow_order[k], &sc.psd[k].rinv(), &mut mm);
            }
        }

        let n_aux = self.n_aux();
        let mut d = vec![0.0; n_aux];
        let mut u: Vec<Vec<f64>> = vec![Vec::new(); n_aux];
        {
            let mut mm = m.as_mut();
            for (k, s) in p.soc.iter().enumerate() {
                let dim = s.dim();
                let mut om = sc.soc[k].omega_dense();
                if let Some(ai) = self.soc_aux[k] {
                    let alpha = s.col(self.aux_col[ai]);
                    let g: Vec<f64> = (0..dim).map(|i| (0..dim).map(|j| om[j * dim + i] * alpha[j]).sum()).collect();
                    let dk: f64 = g.iter().zip(alpha).map(|(a, b)| a * b).sum();
                    for j in 0..dim {
                        for i in 0..dim {
                            om[j * dim + i] -= g[i] * g[j] / dk;
                        }
                    }
                    d[ai] = dk;
                    u[ai] = self.soc_core[k]
                        .iter()
                        .map(|&(col, _)| s.col(col).iter().zip(&g).map(|(a, b)| a * b).sum())
                        .collect();
                }
                let cols = &self.soc_core[k];
                // P = Ω̃ A_c, then M += A_cᵀ P.
                let pm: Vec<Vec<f64>> = cols
                    .iter()
                    .map(|&(col, _)| {
                        let a = s.col(col);
                        (0..dim).map(|i| (0..dim).map(|j| om[j * dim + i] * a[j]).sum()).collect()
                    })
                    .collect();
                for (bj, &(_, cb)) in cols.iter().enumerate() {
                    for (ai, &(col_a, ca)) in cols.iter().enumerate() {
                        if ca < cb {
                            continue;
                        }
                        let a = s.col(col_a);
                        let v: f64 = a.iter().zip(&pm[bj]).map(|(x, y)| x * y).sum();
                        let _ = ai;
                        mm[(ca, cb)] += v;
                    }
                }
            }
            for &k in &self.plain_rows {
                let row = &p.lin[k];
                let w = sc.lin[k];
                let om = 1.0 / (w * w);
                for &(va, a) in &row.coeffs {
                    if let VarKind::Core(ca) = self.kind[va] {
                        for &(vb, b) in &row.coeffs {
                            if let VarKind::Core(cb) = self.kind[vb] {
                                if ca >= cb {
                                    mm[(ca, cb)] += om * a * b;
                                }
                            }
                        }
                    }
                }
            }
        }

        let nl = self.l_rows.len();
        let mut b = Mat::<f64>::zeros(nl, nc);
        let mut kmat = Mat::<f64>::zeros(nl, nl);
        if nl > 0 {
            for (l, &k) in self.l_rows.iter().enumerate() {
                let w = sc.lin[k];
                kmat[(l, l)] += w * w;
                for &(v, a) in &p.lin[k].coeffs {
                    if let VarKind::Core(c) = self.kind[v] {
                        b[(l, c)] += a;
                    }
                }
            }
            for ai in 0..n_aux {
                let cone = self.aux_cone[ai];
                for &(l, a) in &self.aux_rows[ai] {
                    let f = a / d[ai];
                    for (t, &(_, c)) in self.soc_core[cone].iter().enumerate() {
                        b[(l, c)] -= f * u[ai][t];
                    }
                    for &(l2, a2) in &self.aux_rows[ai] {
                        kmat[(l, l2)] += a * a2 / d[ai];
                    }
                }
            }
            if !cholesky_in_place(&mut kmat) {
                return None;
            }
            let mut bt = b.clone();
            solve_lower_triangular_in_place(kmat.as_ref(), bt.as_mut(), Par::Seq);
            matmul(m.as_mut(), Accum::Add, bt.transpose(), bt.as_ref(), 1.0, Par::Seq);
        }

        if reg > 0.0 {
            let top = (0..nc).fold(1.0f64, |a, i| a.max(m[(i, i)].abs()));
            for i in 0..nc {
                m[(i, i)] += reg * top;
            }
        }
        if !cholesky_in_place(&mut m) {
            return None;
        }
        Some(Factor { chol: m, d, u, b, kchol: kmat })
    }

    fn add_psd(&self, cone: &PsdCone, order: &[usize], rinv: &Mat<f64>, m: &mut MatMut<'_, f64>) {
        let core = |v: usize| match self.kind[v] {
            VarKind::Core(c) => c,
            _ => unreachable!("PSD variables are always core"),
        };
        let rf = gemm(rinv.as_ref(), cone.fdense.as_ref());
        let rft = rf.transpose().to_owned();
        let frf = gemm(cone.fdense.transpose(), rf.as_ref());
        let arrows: Vec<(usize, usize, usize)> = order
            .iter()
            .map(|&i| {
                let a = &cone.arrows[i];
                (core(a.var), a.q, a.f)
            })
            .collect();

        for (jj, &(cj, qj, pj)) in arrows.iter().enumerate() {
            let rf_pj = rf.col_as_slice(pj);
            let rft_qj = rft.col_as_slice(qj);
            let frf_pj = frf.col_as_slice(pj);
            let r_qj = rinv.col_as_slice(qj);
            for &(ci, qi, pi) in &arrows[jj..] {
                m[(ci, cj)] += 2.0 * (rft_qj[pi] * rf_pj[qi] + frf_pj[pi] * r_qj[qi]);
            }
        }

        for (gj, g) in cone.generals.iter().enumerate() {
            let cj = core(g.var);
            let s = g.support.len();
            let pos: HashMap<usize, usize> = g.support.iter().enumerate().map(|(t, &i)| (i, t)).collect();
            let mut a_s = Mat::<f64>::zeros(s, s);
            for &(i, j, v) in &g.entries {
                a_s[(pos[&i], pos[&j])] += v;
            }
            let r_s = Mat::from_fn(cone.dim, s, |i, t| rinv[(i, g.support[t])]);
            // B_j = R A_j R = X Y with X = R[:, S] A_S and Y = R[S, :].
            let x = gemm(r_s.as_ref(), a_s.as_ref());
            for &(ci, qi, pi) in &arrows {
                let mut v = 0.0;
                for t in 0..s {
                    v += x[(qi, t)] * rf[(g.support[t], pi)];
                }
                add_lower(m, ci, cj, 2.0 * v);
            }
            let dense = if s > 4 { Some(gemm(x.as_ref(), r_s.transpose())) } else { None };
            for gi in &cone.generals[gj..] {
                let ci = core(gi.var);
                let mut v = 0.0;
                match &dense {
                    Some(bm) => {
                        for &(a, b, w) in &gi.entries {
                            v += w * bm[(a, b)];
                        }
                    }
                    None => {
                        for &(a, b, w) in &gi.entries {
                            let mut e = 0.0;
                            for t in 0..s {
                                e += x[(a, t)] * rinv[(g.support[t], b)];
                            }
                            v += w * e;
                        }
                    }
                }
                add_lower(m, ci, cj, v);
            }
        }
    }

    /// Solves the full normal equations `𝒜ᵀΩ𝒜 Δ = r` with a factor from [`Structure::factor`].
    pub fn solve(&self, f: &Factor, p: &StdProblem, r: &[f64]) -> Vec<f64> {
        let nc = self.n_core;
        let n_aux = self.n_aux();
        let mut rc = vec![0.0; nc];
        let mut ra = vec![0.0; n_aux];
        for (v, k) in self.kind.iter().enumerate() {
            match *k {
                VarKind::Core(c) => rc[c] = r[v],
                VarKind::Aux(a) => ra[a] = r[v],
                VarKind::Unused => {}
            }
        }
        let ra_d: Vec<f64> = (0..n_aux).map(|a| ra[a] / f.d[a]).collect();
        for a in 0..n_aux {
            for (t, &(_, c)) in self.soc_core[self.aux_cone[a]].iter().enumerate() {
                rc[c] -= f.u[a][t] * ra_d[a];
            }
        }
        let nl = self.l_rows.len();
        let mut v = vec![0.0; nl];
        for a in 0..n_aux {
            for &(l, coef) in &self.aux_rows[a] {
                v[l] += coef * ra_d[a];
            }
        }
        if nl > 0 {
            let mut kv = col_vec(&v);
            chol_solve(&f.kchol, &mut kv);
            let mut corr = Mat::<f64>::zeros(nc, 1);
            matmul(corr.as_mut(), Accum::Replace, f.b.transpose(), kv.as_ref(), 1.0, Par::Seq);
            for c in 0..nc {
                rc[c] -= corr[(c, 0)];
            }
        }
        let mut dc = col_vec(&rc);
        chol_solve(&f.chol, &mut dc);
        let mut y = vec![0.0; nl];
        if nl > 0 {
            let mut bd = Mat::<f64>::zeros(nl, 1);
            matmul(bd.as_mut(), Accum::Replace, f.b.as_ref(), dc.as_ref(), 1.0, Par::Seq);
            let mut yv = Mat::from_fn(nl, 1, |l, _| bd[(l, 0)] + v[l]);
            chol_solve(&f.kchol, &mut yv);
            for l in 0..nl {
                y[l] = yv[(l, 0)];
            }
        }
        let mut out = vec![0.0; p.n];
        for (var, k) in self.kind.iter().enumerate() {
            match *k {
                VarKind::Core(c) => out[var] = dc[(c, 0)],
                VarKind::Aux(a) => {
                    let cone = self.aux_cone[a];
                    let mut val = ra[a];
                    for (t, &(_, c)) in self.soc_core[cone].iter().enumerate() {
                        val -= f.u[a][t] * dc[(c, 0)];
                    }
                    for &(l, coef) in &self.aux_rows[a] {
                        val -= coef * y[l];
                    }
                    out[var] = val / f.d[a];
                }
                VarKind::Unused => {}
            }
        }
        out
    }

    /// Solve with iterative refinement against the unfactorised operator.
    pub fn solve_refined(&self, f: &Factor, p: &StdProblem, sc: &Scaling, r: &[f64]) -> Vec<f64> {
        let mut x = self.solve(f, p, r);
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let mx = p.normal_apply(sc, &x);
            let res: Vec<f64> =
                r.iter().zip(&mx).enumerate().map(|(v, (a, b))| if self.is_unused(v) { 0.0 } else { a - b }).collect();
            let nres = res.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nres <= 1e-14 * (1.0 + rnorm) || nres >= 0.5 * best {
                break;
            }
            best = nres;
            let dx = self.solve(f, p, &res);
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
        }
        x
    }
}
