//! Vectors over a product of nonnegative, second-order and PSD cones, with the
//! Nesterov–Todd scaling and Jordan-algebra operations the solver needs.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Layout {
    pub lin: usize,
    pub soc: Vec<usize>,
    pub psd: Vec<usize>,
}

impl Layout {
    /// Degree of the cone (rank of its Jordan algebra).
    pub fn degree(&self) -> usize {
        self.lin + self.soc.len() + self.psd.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConeVec {
    pub lin: Vec<f64>,
    pub soc: Vec<Vec<f64>>,
    pub psd: Vec<Mat<f64>>,
}

pub(crate) fn gemm(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(a.nrows(), b.ncols());
    matmul(out.as_mut(), Accum::Replace, a, b, 1.0, Par::Seq);
    out
}

/// `a · m · aᵀ`.
pub(crate) fn congruence(a: MatRef<'_, f64>, m: MatRef<'_, f64>) -> Mat<f64> {
    let am = gemm(a, m);
    let mut out = gemm(am.as_ref(), a.transpose());
    sym_in_place(&mut out);
    out
}

pub(crate) fn sym_in_place(m: &mut Mat<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn frob_dot(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        let (ca, cb) = (a.col_as_slice(j), b.col_as_slice(j));
        for i in 0..ca.len() {
            s += ca[i] * cb[i];
        }
    }
    s
}

impl ConeVec {
    pub fn zeros(l: &Layout) -> Self {
        Self {
            lin: vec![0.0; l.lin],
            soc: l.soc.iter().map(|&d| vec![0.0; d]).collect(),
            psd: l.psd.iter().map(|&d| Mat::zeros(d, d)).collect(),
        }
    }

    /// Identity element of the Jordan algebra.
    pub fn identity(l: &Layout) -> Self {
        let mut v = Self::zeros(l);
        v.lin.iter_mut().for_each(|x| *x = 1.0);
        v.soc.iter_mut().for_each(|s| s[0] = 1.0);
        for m in &mut v.psd {
            for i in 0..m.nrows() {
                m[(i, i)] = 1.0;
            }
        }
        v
    }

    pub fn dot(&self, o: &Self) -> f64 {
        let mut s: f64 = self.lin.iter().zip(&o.lin).map(|(a, b)| a * b).sum();
        for (a, b) in self.soc.iter().zip(&o.soc) {
            s += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        }
        for (a, b) in self.psd.iter().zip(&o.psd) {
            s += frob_dot(a, b);
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += alpha * o`.
    pub fn axpy(&mut self, alpha: f64, o: &Self) {
        self.lin.iter_mut().zip(&o.lin).for_each(|(a, b)| *a += alpha * b);
        for (a, b) in self.soc.iter_mut().zip(&o.soc) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += alpha * y);
        }
        for (a, b) in self.psd.iter_mut().zip(&o.psd) {
            for j in 0..a.ncols() {
                let cb = b.col_as_slice(j);
                let ca = a.col_as_slice_mut(j);
                for i in 0..ca.len() {
                    ca[i] += alpha * cb[i];
                }
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.lin.iter_mut().for_each(|a| *a *= alpha);
        self.soc.iter_mut().flatten().for_each(|a| *a *= alpha);
        for a in &mut self.psd {
            for j in 0..a.ncols() {
                a.col_as_slice_mut(j).iter_mut().for_each(|x| *x *= alpha);
            }
        }
    }

    pub fn combine(&self, alpha: f64, o: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(alpha, o);
        out
    }

    /// Jordan product `self ∘ o`.
    pub fn jprod(&self, o: &Self) -> Self {
        let lin = self.lin.iter().zip(&o.lin).map(|(a, b)| a * b).collect();
        let soc = self
            .soc
            .iter()
            .zip(&o.soc)
            .map(|(a, b)| {
                let mut out = vec![a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()];
                out.extend((1..a.len()).map(|i| a[0] * b[i] + b[0] * a[i]));
                out
            })
            .collect();
        let psd = self
            .psd
            .iter()
            .zip(&o.psd)
            .map(|(a, b)| {
                let mut ab = gemm(a.as_ref(), b.as_ref());
                let n = ab.nrows();
                for j in 0..n {
                    for i in j..n {
                        let v = 0.5 * (ab[(i, j)] + ab[(j, i)]);
                        ab[(i, j)] = v;
                        ab[(j, i)] = v;
                    }
                }
                ab
            })
            .collect();
        Self { lin, soc, psd }
    }

    /// Smallest "eigenvalue" in each cone, i.e. the largest `t` with
    /// `self − t·e` in the cone.
    pub fn min_eig(&self) -> f64 {
        let mut m = f64::INFINITY;
        for &v in &self.lin {
            m = m.min(v);
        }
        for s in &self.soc {
            m = m.min(s[0] - norm(&s[1..]));
        }
        for p in &self.psd {
            if p.nrows() > 0 {
                let vals = p.self_adjoint_eigenvalues(Side::Lower).expect("eigensolver failed");
                m = m.min(vals.iter().cloned().fold(f64::INFINITY, f64::min));
            }
        }
        m
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Inverse of `x ↦ λ ∘ x` applied to `d`, for `λ` in scaled (diagonal for
/// PSD) form.
pub(crate) fn jdiv(lambda: &Scaled, d: &ConeVec) -> ConeVec {
    let lin = d.lin.iter().zip(&lambda.lin).map(|(a, l)| a / l).collect();
    let soc = lambda
        .soc
        .iter()
        .zip(&d.soc)
        .map(|(l, dv)| {
            let l1 = &l[1..];
            let d1 = &dv[1..];
            let l1d1: f64 = l1.iter().zip(d1).map(|(a, b)| a * b).sum();
            let det = l[0] * l[0] - l1.iter().map(|a| a * a).sum::<f64>();
            let x0 = (l[0] * dv[0] - l1d1) / det;
            let mut out = vec![x0];
            out.extend(d1.iter().zip(l1).map(|(di, li)| (di - x0 * li) / l[0]));
            out
        })
        .collect();
    let psd = lambda
        .psd
        .iter()
        .zip(&d.psd)
        .map(|(l, dm)| Mat::from_fn(l.len(), l.len(), |i, j| 2.0 * dm[(i, j)] / (l[i] + l[j])))
        .collect();
    ConeVec { lin, soc, psd }
}

/// Point of the scaled cone: NT scaling maps both `s` and `z` to `λ`.
#[derive(Debug, Clone)]
pub(crate) struct Scaled {
    pub lin: Vec<f64>,
    pub soc: Vec<Vec<f64>>,
    /// Diagonal of λ per PSD block.
    pub psd: Vec<Vec<f64>>,
}

impl Scaled {
    pub fn to_vec(&self) -> ConeVec {
        ConeVec {
            lin: self.lin.clone(),
            soc: self.soc.clone(),
            psd: self
                .psd
                .iter()
                .map(|d| Mat::from_fn(d.len(), d.len(), |i, j| if i == j { d[i] } else { 0.0 }))
                .collect(),
        }
    }

    pub fn dot_self(&self) -> f64 {
        self.lin.iter().map(|x| x * x).sum::<f64>()
            + self.soc.iter().flatten().map(|x| x * x).sum::<f64>()
            + self.psd.iter().flatten().map(|x| x * x).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SocScale {
    pub eta: f64,
    pub wbar: Vec<f64>,
}

impl SocScale {
    /// `W̄ v`.
    fn wbar_apply(&self, v: &[f64]) -> Vec<f64> {
        let w = &self.wbar;
        let c: f64 = w[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
        let mut out = vec![w[0] * v[0] + c];
        let f = v[0] + c / (1.0 + w[0]);
        out.extend(v[1..].iter().zip(&w[1..]).map(|(vi, wi)| vi + f * wi));
        out
    }

    /// `W̄⁻¹ v = J W̄ J v`.
    fn wbar_inv_apply(&self, v: &[f64]) -> Vec<f64> {
        let w = &self.wbar;
        let c: f64 = w[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
        let mut out = vec![w[0] * v[0] - c];
        let f = v[0] - c / (1.0 + w[0]);
        out.extend(v[1..].iter().zip(&w[1..]).map(|(vi, wi)| vi - f * wi));
        out
    }

    /// Dense `Ω = W⁻² = η⁻²(2ŵŵᵀ − J)` with `ŵ = J w̄`.
    pub fn omega_dense(&self) -> Vec<f64> {
        let d = self.wbar.len();
        let inv = 1.0 / (self.eta * self.eta);
        let hat: Vec<f64> = self.wbar.iter().enumerate().map(|(i, v)| if i == 0 { *v } else { -v }).collect();
        let mut out = vec![0.0; d * d];
        for j in 0..d {
            for i in 0..d {
                let mut v = 2.0 * hat[i] * hat[j];
                if i == j {
                    v += if i == 0 { -1.0 } else { 1.0 };
                }
                out[j * d + i] = inv * v;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PsdScale {
    pub r: Mat<f64>,
    /// `r⁻ᵀ`.
    pub rti: Mat<f64>,
}

impl PsdScale {
    /// `R⁻¹ = r⁻ᵀ r⁻¹`, the two-sided factor of `Ω(v) = R⁻¹ v R⁻¹`.
    pub fn rinv(&self) -> Mat<f64> {
        let mut out = gemm(self.rti.as_ref(), self.rti.transpose());
        sym_in_place(&mut out);
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub lin: Vec<f64>,
    pub soc: Vec<SocScale>,
    pub psd: Vec<PsdScale>,
}

#[derive(Debug)]
pub(crate) struct NotInterior;

fn soc_det(v: &[f64]) -> f64 {
    let n1 = norm(&v[1..]);
    (v[0] - n1) * (v[0] + n1)
}

fn soc_scale(s: &[f64], z: &[f64]) -> Result<(SocScale, Vec<f64>), NotInterior> {
    let (ds, dz) = (soc_det(s), soc_det(z));
    if !(ds > 0.0 && dz > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
        return Err(NotInterior);
    }
    let (a, b) = (ds.sqrt(), dz.sqrt());
    let eta = (a / b).sqrt();
    let sb: Vec<f64> = s.iter().map(|v| v / a).collect();
    let zb: Vec<f64> = z.iter().map(|v| v / b).collect();
    let dot: f64 = sb.iter().zip(&zb).map(|(x, y)| x * y).sum();
    let gamma = ((1.0 + dot) / 2.0).sqrt();
    let mut wbar: Vec<f64> = sb
        .iter()
        .zip(&zb)
        .enumerate()
        .map(|(i, (x, y))| if i == 0 { (x + y) / (2.0 * gamma) } else { (x - y) / (2.0 * gamma) })
        .collect();
    // Re-normalise so that w̄ᵀJw̄ = 1 exactly.
    let det = soc_det(&wbar);
    if det > 0.0 {
        let f = 1.0 / det.sqrt();
        wbar.iter_mut().for_each(|v| *v *= f);
    }
    let sc = SocScale { eta, wbar };
    let lambda: Vec<f64> = sc.wbar_apply(z).into_iter().map(|v| v * eta).collect();
    Ok((sc, lambda))
}

fn llt_lower(m: &Mat<f64>) -> Result<Mat<f64>, NotInterior> {
    let f = m.llt(Side::Lower).map_err(|_| NotInterior)?;
    Ok(f.L().to_owned())
}

/// NT scaling of a PSD pair, composed onto an existing `(r, rti)`: given the
/// scaled points `s̃ = r⁻¹ S r⁻ᵀ` and `z̃ = rᵀ Z r`, returns the updated scaling
/// and the new diagonal `λ`.
pub(crate) fn psd_rescale(
    prev: &PsdScale,
    s_tilde: &Mat<f64>,
    z_tilde: &Mat<f64>,
) -> Result<(PsdScale, Vec<f64>), NotInterior> {
    let ls = llt_lower(s_tilde)?;
    let lz = llt_lower(z_tilde)?;
    let prod = gemm(lz.transpose(), ls.as_ref());
    let svd = prod.svd().map_err(|_| NotInterior)?;
    let sv = svd.S().column_vector();
    let n = prod.nrows();
    let lam: Vec<f64> = (0..n).map(|i| sv[i]).collect();
    if lam.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(NotInterior);
    }
    let mut lsv = gemm(ls.as_ref(), svd.V());
    let mut lzu = gemm(lz.as_ref(), svd.U());
    for j in 0..n {
        let f = 1.0 / lam[j].sqrt();
        lsv.col_as_slice_mut(j).iter_mut().for_each(|v| *v *= f);
        lzu.col_as_slice_mut(j).iter_mut().for_each(|v| *v *= f);
    }
    let r = gemm(prev.r.as_ref(), lsv.as_ref());
    let rti = gemm(prev.rti.as_ref(), lzu.as_ref());
    Ok((PsdScale { r, rti }, lam))
}

impl Scaling {
    pub fn identity(l: &Layout) -> Self {
        Self {
            lin: vec![1.0; l.lin],
            soc: l
                .soc
                .iter()
                .map(|&d| {
                    let mut w = vec![0.0; d];
                    w[0] = 1.0;
                    SocScale { eta: 1.0, wbar: w }
                })
                .collect(),
            psd: l.psd.iter().map(|&d| PsdScale { r: Mat::identity(d, d), rti: Mat::identity(d, d) }).collect(),
        }
    }

    /// Fresh NT scaling of an interior pair `(s, z)`.
    pub fn compute(l: &Layout, s: &ConeVec, z: &ConeVec) -> Result<(Self, Scaled), NotInterior> {
        let mut sc = Self::identity(l);
        let mut lam = Scaled { lin: vec![0.0; l.lin], soc: Vec::new(), psd: Vec::new() };
        sc.set_lin_soc(s, z, &mut lam)?;
        for (k, _) in l.psd.iter().enumerate() {
            let (p, d) = psd_rescale(&sc.psd[k], &s.psd[k], &z.psd[k])?;
            sc.psd[k] = p;
            lam.psd.push(d);
        }
        Ok((sc, lam))
    }

    /// Recomputes the nonnegative and second-order parts from `(s, z)`.
    pub fn set_lin_soc(&mut self, s: &ConeVec, z: &ConeVec, lam: &mut Scaled) -> Result<(), NotInterior> {
        for i in 0..s.lin.len() {
            let (si, zi) = (s.lin[i], z.lin[i]);
            if !(si > 0.0 && zi > 0.0) {
                return Err(NotInterior);
            }
            self.lin[i] = (si / zi).sqrt();
            lam.lin[i] = (si * zi).sqrt();
        }
        lam.soc.clear();
        for k in 0..s.soc.len() {
            let (sc, l) = soc_scale(&s.soc[k], &z.soc[k])?;
            self.soc[k] = sc;
            lam.soc.push(l);
        }
        Ok(())
    }

    fn lin_soc(&self, v: &ConeVec, forward: bool) -> (Vec<f64>, Vec<Vec<f64>>) {
        // W is symmetric on these cones: W = Wᵀ and W⁻¹ = W⁻ᵀ.
        let lin = v.lin.iter().zip(&self.lin).map(|(a, w)| if forward { a * w } else { a / w }).collect();
        let soc = v
            .soc
            .iter()
            .zip(&self.soc)
            .map(|(x, sc)| {
                if forward {
                    sc.wbar_apply(x).into_iter().map(|y| y * sc.eta).collect()
                } else {
                    sc.wbar_inv_apply(x).into_iter().map(|y| y / sc.eta).collect()
                }
            })
            .collect();
        (lin, soc)
    }

    /// `W v` (maps `z` to `λ`).
    #[cfg(test)]
    pub fn w(&self, v: &ConeVec) -> ConeVec {
        let (lin, soc) = self.lin_soc(v, true);
        let psd = v.psd.iter().zip(&self.psd).map(|(x, sc)| congruence(sc.r.transpose(), x.as_ref())).collect();
        ConeVec { lin, soc, psd }
    }

    /// `Wᵀ v` (maps `λ` to `s`).
    pub fn wt(&self, v: &ConeVec) -> ConeVec {
        let (lin, soc) = self.lin_soc(v, true);
        let psd = v.psd.iter().zip(&self.psd).map(|(x, sc)| congruence(sc.r.as_ref(), x.as_ref())).collect();
        ConeVec { lin, soc, psd }
    }

    /// `W⁻¹ v` (maps `λ` to `z`).
    pub fn w_inv(&self, v: &ConeVec) -> ConeVec {
        let (lin, soc) = self.lin_soc(v, false);
        let psd = v.psd.iter().zip(&self.psd).map(|(x, sc)| congruence(sc.rti.as_ref(), x.as_ref())).collect();
        ConeVec { lin, soc, psd }
    }

    /// `W⁻ᵀ v` (maps `s` to `λ`).
    pub fn w_inv_t(&self, v: &ConeVec) -> ConeVec {
        let (lin, soc) = self.lin_soc(v, false);
        let psd = v.psd.iter().zip(&self.psd).map(|(x, sc)| congruence(sc.rti.transpose(), x.as_ref())).collect();
        ConeVec { lin, soc, psd }
    }

    /// `Ω v = (WᵀW)⁻¹ v`.
    pub fn omega(&self, v: &ConeVec) -> ConeVec {
        self.w_inv(&self.w_inv_t(v))
    }
}

fn lin_step(v: f64, d: f64) -> f64 {
    if d < 0.0 {
        -v / d
    } else {
        f64::INFINITY
    }
}

/// Largest `α` with `v + α d` in the second-order cone, for interior `v`.
fn soc_step(v: &[f64], d: &[f64]) -> f64 {
    let a = soc_det(d);
    let b = 2.0 * (v[0] * d[0] - v[1..].iter().zip(&d[1..]).map(|(x, y)| x * y).sum::<f64>());
    let c = soc_det(v);
    if a >= 0.0 && d[0] >= 0.0 {
        return f64::INFINITY;
    }
    let mut best = f64::INFINITY;
    if d[0] < 0.0 {
        best = -v[0] / d[0];
    }
    if a.abs() <= 1e-300 {
        if b < 0.0 {
            best = best.min(-c / b);
        }
        return best;
    }
    let disc = (b * b - 4.0 * a * c).max(0.0);
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    for root in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
        if root > 0.0 {
            best = best.min(root);
        }
    }
    best
}

/// Largest `α` with `λ + α d` in the cone, `λ` in scaled form.
pub(crate) fn max_step(lam: &Scaled, d: &ConeVec) -> f64 {
    let mut alpha = f64::INFINITY;
    for (l, x) in lam.lin.iter().zip(&d.lin) {
        alpha = alpha.min(lin_step(*l, *x));
    }
    for (l, x) in lam.soc.iter().zip(&d.soc) {
        alpha = alpha.min(soc_step(l, x));
    }
    for (l, x) in lam.psd.iter().zip(&d.psd) {
        let n = l.len();
        if n == 0 {
            continue;
        }
        let isq: Vec<f64> = l.iter().map(|v| 1.0 / v.sqrt()).collect();
        let m = Mat::from_fn(n, n, |i, j| 0.5 * (x[(i, j)] + x[(j, i)]) * isq[i] * isq[j]);
        let vals = m.self_adjoint_eigenvalues(Side::Lower).expect("eigensolver failed");
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        if lo < 0.0 {
            alpha = alpha.min(-1.0 / lo);
        }
    }
    alpha
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Layout {
        Layout { lin: 2, soc: vec![3], psd: vec![3] }
    }

    fn sample(shift: f64) -> ConeVec {
        let mut v = ConeVec::zeros(&layout());
        v.lin = vec![1.0 + shift, 2.0];
        v.soc = vec![vec![2.0 + shift, 0.5, -1.0]];
        v.psd = vec![Mat::from_fn(3, 3, |i, j| if i == j { 2.0 + shift + i as f64 } else { 0.3 * shift + 0.1 })];
        v
    }

    fn close(a: &ConeVec, b: &ConeVec, tol: f64) -> bool {
        let d = a.combine(-1.0, b);
        d.norm() <= tol * (1.0 + a.norm())
    }

    #[test]
    fn nt_scaling_maps_s_and_z_to_lambda() {
        let l = layout();
        let (s, z) = (sample(0.0), sample(0.7));
        let (sc, lam) = Scaling::compute(&l, &s, &z).unwrap();
        let lv = lam.to_vec();
        assert!(close(&sc.w(&z), &lv, 1e-12));
        assert!(close(&sc.w_inv_t(&s), &lv, 1e-12));
        assert!(close(&sc.wt(&lv), &s, 1e-12));
        assert!(close(&sc.w_inv(&lv), &z, 1e-12));
        // Ω s = z for an NT pair.
        assert!(close(&sc.omega(&s), &z, 1e-11));
        // The dense SOC Ω agrees with the operator.
        let om = sc.soc[0].omega_dense();
        let ss = &s.soc[0];
        for i in 0..3 {
            let v: f64 = (0..3).map(|j| om[j * 3 + i] * ss[j]).sum();
            assert!((v - z.soc[0][i]).abs() < 1e-11);
        }
    }

    #[test]
    fn jdiv_inverts_jprod() {
        let l = layout();
        let (sc, lam) = Scaling::compute(&l, &sample(0.0), &sample(0.4)).unwrap();
        let _ = sc;
        let d = sample(1.3);
        let x = jdiv(&lam, &d);
        let back = lam.to_vec().jprod(&x);
        assert!(close(&back, &d, 1e-12));
    }

    #[test]
    fn step_lengths_hit_the_boundary() {
        assert_eq!(soc_step(&[2.0, 0.0], &[-1.0, 0.0]), 2.0);
        let a = soc_step(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        assert!((a - 1.0).abs() < 1e-12);
        assert!(soc_step(&[1.0, 0.0], &[1.0, 0.5]).is_infinite());
        let lam = Scaled { lin: vec![], soc: vec![], psd: vec![vec![1.0, 4.0]] };
        let mut d = ConeVec { lin: vec![], soc: vec![], psd: vec![Mat::zeros(2, 2)] };
        d.psd[0][(1, 1)] = -2.0;
        assert!((max_step(&lam, &d) - 2.0).abs() < 1e-12);
    }
}
