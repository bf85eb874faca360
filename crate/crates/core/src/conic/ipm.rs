//! Homogeneous self-dual interior-point method with Nesterov–Todd scaling and
//! Mehrotra predictor–corrector steps.
//!
//! Standard form after presolve: minimise `cᵀx` subject to `s = h + 𝒜x ∈ K`;
//! the dual is maximise `−hᵀz` subject to `𝒜ᵀz = c`, `z ∈ K`.

use std::collections::BTreeMap;
use std::time::Instant;

use log::debug;
use nalgebra::DMatrix;

use super::cones::{jdiv, max_step, psd_rescale, ConeVec, Scaled, Scaling};
use super::schur::{Factor, LinRow, PsdCone, SocCone, StdProblem, Structure};
use super::{ConicProgram, SolveStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Feasibility, absolute and relative gap tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Log one line per iteration at `info` level instead of `debug`.
    pub verbose: bool,
    /// Wall-clock budget in seconds.
    pub time_limit: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, verbose: false, time_limit: None }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub dual_objective: f64,
    pub iterations: usize,
    pub message: String,
}

impl Outcome {
    pub fn failed(n: usize, message: String) -> Self {
        Self {
            status: SolveStatus::NumericalTrouble,
            x: vec![0.0; n],
            dual_objective: f64::NAN,
            iterations: 0,
            message,
        }
    }

    fn status(n: usize, status: SolveStatus, message: &str) -> Self {
        Self { status, x: vec![0.0; n], dual_objective: f64::NAN, iterations: 0, message: message.into() }
    }
}

/// Affine substitution `x = x_p + Z ξ` eliminating the equality constraints.
struct Substitution {
    xp: Vec<f64>,
    /// Sparse rows of `Z`.
    z: Vec<Vec<(usize, f64)>>,
    n_free: usize,
}

impl Substitution {
    fn identity(n: usize) -> Self {
        Self { xp: vec![0.0; n], z: (0..n).map(|i| vec![(i, 1.0)]).collect(), n_free: n }
    }

    /// Reduced row-echelon elimination with complete pivoting. `None` means
    /// the equalities are inconsistent.
    fn from_equalities(p: &ConicProgram) -> Option<Self> {
        let n = p.num_vars;
        let m = p.eq_rhs.len();
        if m == 0 {
            return Some(Self::identity(n));
        }
        let mut a = DMatrix::<f64>::zeros(m, n);
        for &(r, c, v) in &p.equalities {
            a[(r, c)] += v;
        }
        let mut b = p.eq_rhs.clone();
        let scale = a.amax().max(1e-300);
        let tol = 1e-12 * scale * (m.max(n) as f64);
        let mut pivots: Vec<usize> = Vec::new();
        let mut is_pivot = vec![false; n];
        let mut row = 0;
        while row < m {
            let mut best = (0.0, 0, 0);
            for i in row..m {
                for j in 0..n {
                    if !is_pivot[j] && a[(i, j)].abs() > best.0 {
                        best = (a[(i, j)].abs(), i, j);
                    }
                }
            }
            if best.0 <= tol {
                break;
            }
            let (_, pi, pj) = best;
            a.swap_rows(row, pi);
            b.swap(row, pi);
            let piv = a[(row, pj)];
            for j in 0..n {
                a[(row, j)] /= piv;
            }
            b[row] /= piv;
            for i in 0..m {
                if i != row {
                    let f = a[(i, pj)];
                    if f != 0.0 {
                        for j in 0..n {
                            a[(i, j)] -= f * a[(row, j)];
                        }
                        b[i] -= f * b[row];
                    }
                }
            }
            is_pivot[pj] = true;
            pivots.push(pj);
            row += 1;
        }
        let bscale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if b[row..].iter().any(|v| v.abs() > 1e-9 * bscale) {
            return None;
        }
        let mut free_index = vec![usize::MAX; n];
        let mut n_free = 0;
        for j in 0..n {
            if !is_pivot[j] {
                free_index[j] = n_free;
                n_free += 1;
            }
        }
        let mut xp = vec![0.0; n];
        let mut z: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for j in 0..n {
            if !is_pivot[j] {
                z[j].push((free_index[j], 1.0));
            }
        }
        let drop = 1e-14;
        for (r, &pj) in pivots.iter().enumerate() {
            xp[pj] = b[r];
            for j in 0..n {
                if !is_pivot[j] && a[(r, j)].abs() > drop {
                    z[pj].push((free_index[j], -a[(r, j)]));
                }
            }
        }
        Some(Self { xp, z, n_free })
    }

    fn recover(&self, xi: &[f64]) -> Vec<f64> {
        self.xp.iter().zip(&self.z).map(|(x0, row)| x0 + row.iter().map(|&(k, v)| v * xi[k]).sum::<f64>()).collect()
    }
}

fn reduce(p: &ConicProgram, sub: &Substitution) -> (StdProblem, f64) {
    let nf = sub.n_free;
    let mut c = vec![0.0; nf];
    let mut offset = 0.0;
    for (i, &ci) in p.objective.iter().enumerate() {
        offset += ci * sub.xp[i];
        for &(k, v) in &sub.z[i] {
            c[k] += ci * v;
        }
    }

    let mut lin = Vec::new();
    for &i in &p.nonneg_vars {
        lin.push(LinRow { h: sub.xp[i], coeffs: sub.z[i].clone() });
    }
    let mut soc = Vec::new();
    for con in &p.soc_constraints {
        let mut h = con.constant.clone();
        let mut cols: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for &(r, var, v) in &con.coeffs {
            h[r] += v * sub.xp[var];
            for &(k, zv) in &sub.z[var] {
                cols.entry(k).or_insert_with(|| vec![0.0; con.dim])[r] += v * zv;
            }
        }
        cols.retain(|_, col| col.iter().any(|&v| v != 0.0));
        if con.dim == 1 {
            lin.push(LinRow { h: h[0], coeffs: cols.into_iter().map(|(k, col)| (k, col[0])).collect() });
        } else {
            let vars: Vec<usize> = cols.keys().copied().collect();
            let a: Vec<f64> = cols.into_values().flatten().collect();
            soc.push(SocCone { h, vars, a });
        }
    }
    let mut psd = Vec::new();
    for blk in &p.psd_blocks {
        let mut constant = blk.constant.clone();
        let mut per_var: BTreeMap<usize, Vec<(usize, usize, f64)>> = BTreeMap::new();
        for &(var, i, j, v) in &blk.coeffs {
            if sub.xp[var] != 0.0 {
                constant.push((i, j, v * sub.xp[var]));
            }
            for &(k, zv) in &sub.z[var] {
                per_var.entry(k).or_default().push((i, j, v * zv));
            }
        }
        psd.push(PsdCone::build(blk.dim, &constant, per_var));
    }
    (StdProblem::new(nf, c, lin, soc, psd), offset)
}

pub(crate) fn solve(p: &ConicProgram, opts: &SolveOptions) -> Outcome {
    let n = p.num_vars;
    let Some(sub) = Substitution::from_equalities(p) else {
        return Outcome::status(n, SolveStatus::Infeasible, "equality constraints are inconsistent");
    };
    let (q, offset) = reduce(p, &sub);
    let st = Structure::analyse(&q);
    let cmax = q.c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for v in 0..q.n {
        if st.is_unused(v) && q.c[v].abs() > 1e-12 * cmax.max(1.0) {
            return Outcome::status(n, SolveStatus::Unbounded, "objective depends on an unconstrained direction");
        }
    }
    if q.layout.degree() == 0 {
        let x = sub.recover(&vec![0.0; q.n]);
        return Outcome {
            status: SolveStatus::Optimal,
            x,
            dual_objective: offset,
            iterations: 0,
            message: "trivial".into(),
        };
    }
    let mut out = hsd(&q, &st, opts);
    out.x = sub.recover(&out.x);
    out.dual_objective += offset;
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn vnorm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn factor(q: &StdProblem, st: &Structure, sc: &Scaling) -> Option<Factor> {
    [0.0, 1e-13, 1e-11, 1e-9, 1e-7].iter().find_map(|&reg| st.factor(q, sc, reg))
}

struct Direction {
    dx: Vec<f64>,
    ds: ConeVec,
    dz: ConeVec,
    dtau: f64,
    dkappa: f64,
}

fn log_line(verbose: bool, msg: String) {
    if verbose {
        log::info!("{msg}");
    } else {
        debug!("{msg}");
    }
}

fn hsd(q: &StdProblem, st: &Structure, opts: &SolveOptions) -> Outcome {
    let n = q.n;
    let tol = opts.tol;
    let l = &q.layout;
    let h = q.h();
    let c = &q.c;
    let hnorm = h.norm().max(1.0);
    let cnorm = vnorm(c).max(1.0);
    let e = ConeVec::identity(l);
    let degree = l.degree() as f64;

    // Starting point from the identity scaling.
    let sc0 = Scaling::identity(l);
    let Some(f0) = factor(q, st, &sc0) else {
        return Outcome::failed(n, "normal equations are singular at the starting point".into());
    };
    let mut x: Vec<f64> = st.solve_refined(&f0, q, &sc0, &q.adjoint(&h)).iter().map(|v| -v).collect();
    let mut s = h.combine(1.0, &q.apply(&x));
    let y = st.solve_refined(&f0, q, &sc0, c);
    let mut z = q.apply(&y);
    drop(f0);
    for v in [&mut s, &mut z] {
        let t = -v.min_eig();
        if t >= -1e-8 * v.norm().max(1.0) {
            v.axpy(1.0 + t, &e);
        }
    }
    let (mut tau, mut kappa) = (1.0, 1.0);
    let Ok((mut sc, mut lam)) = Scaling::compute(l, &s, &z) else {
        return Outcome::failed(n, "starting point is not interior".into());
    };

    let start = Instant::now();
    let mut last = Outcome::failed(n, String::new());
    // Best iterate so far by its worst residual; returned when the run ends early.
    let mut best: Option<(f64, Outcome)> = None;
    let reduced_tol = (1e3 * tol).min(1e-4);
    let stop = |mut last: Outcome, why: &str, best: Option<(f64, Outcome)>| -> Outcome {
        match best {
            Some((score, mut out)) if score <= reduced_tol => {
                out.status = SolveStatus::Optimal;
                out.message = format!("reduced accuracy ({why}); {}", out.message);
                out
            }
            Some((_, mut out)) => {
                out.message = format!("{why}; best iterate {}", out.message);
                out
            }
            None => {
                last.message = format!("{why}; {}", last.message);
                last
            }
        }
    };
    for it in 0..=opts.max_iter {
        let ax = q.apply(&x);
        let mut rz = s.combine(-1.0, &ax);
        rz.axpy(-tau, &h);
        let atz = q.adjoint(&z);
        let rx: Vec<f64> = atz.iter().zip(c).map(|(a, b)| a - tau * b).collect();
        let cx = dot(c, &x);
        let hz = h.dot(&z);
        let rt = kappa + cx + hz;
        let gap = lam.dot_self();
        let pres = rz.norm() / tau / hnorm;
        let dres = vnorm(&rx) / tau / cnorm;
        let pcost = cx / tau;
        let dcost = -hz / tau;
        let absgap = gap / (tau * tau);
        let relgap = if pcost < 0.0 {
            absgap / -pcost
        } else if dcost > 0.0 {
            absgap / dcost
        } else {
            f64::INFINITY
        };
        log_line(
            opts.verbose,
            format!("it {it:3} pcost {pcost:+.9e} dcost {dcost:+.9e} gap {absgap:.2e} pres {pres:.2e} dres {dres:.2e} tau {tau:.2e} kappa {kappa:.2e}"),
        );
        let xs: Vec<f64> = x.iter().map(|v| v / tau).collect();
        last = Outcome {
            status: SolveStatus::NumericalTrouble,
            x: xs.clone(),
            dual_objective: dcost,
            iterations: it,
            message: format!("stopped with pres {pres:.2e} dres {dres:.2e} gap {absgap:.2e}"),
        };

        let score = pres.max(dres).max(absgap.min(relgap));
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            let slack = h.combine(1.0 / tau, &ax);
            if slack.min_eig() >= -5.0 * tol {
                best = Some((score, last.clone()));
            }
        } else if best.as_ref().is_some_and(|(b, _)| *b <= reduced_tol && score > 1e2 * b) {
            return stop(last, "progress lost", best);
        }
        if pres <= tol && dres <= tol && (absgap <= tol || relgap <= tol) {
            let slack = h.combine(1.0 / tau, &ax);
            if slack.min_eig() >= -5.0 * tol {
                last.status = SolveStatus::Optimal;
                last.message = format!("converged in {it} iterations");
                return last;
            }
        }
        if hz < 0.0 && tau < kappa && vnorm(&atz) / (-hz) / cnorm <= tol {
            let mut out = Outcome::status(n, SolveStatus::Infeasible, "primal infeasibility certificate");
            out.iterations = it;
            return out;
        }
        if cx < 0.0 && tau < kappa && s.combine(-1.0, &ax).norm() / (-cx) / hnorm <= tol {
            let mut out = Outcome::status(n, SolveStatus::Unbounded, "dual infeasibility certificate");
            out.iterations = it;
            return out;
        }
        if it == opts.max_iter {
            return stop(last, "iteration limit reached", best);
        }
        if opts.time_limit.is_some_and(|lim| start.elapsed().as_secs_f64() > lim) {
            return stop(last, "time limit reached", best);
        }

        let Some(fac) = factor(q, st, &sc) else {
            return stop(last, "normal equations became singular", best);
        };
        // Everything below lives in scaled coordinates: z̃ = W z, s̃ = W⁻ᵀ s.
        let ht = sc.w_inv_t(&h);
        let rzt = sc.w_inv_t(&rz);
        let mut r1 = q.adjoint(&sc.w_inv(&ht));
        r1.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        let dx1 = st.solve_refined(&fac, q, &sc, &r1);
        let dzt1 = ht.combine(-1.0, &sc.w_inv_t(&q.apply(&dx1)));
        let den = kappa / tau + dot(c, &dx1) + ht.dot(&dzt1);

        let direction = |eta: f64, ds: &ConeVec, dk: f64| -> Direction {
            let u = jdiv(&lam, ds);
            let qt = u.combine(eta, &rzt);
            let mut r2 = q.adjoint(&sc.w_inv(&qt));
            r2.iter_mut().zip(&rx).for_each(|(a, b)| *a += eta * b);
            let dx2 = st.solve_refined(&fac, q, &sc, &r2);
            let dzt2 = qt.combine(-1.0, &sc.w_inv_t(&q.apply(&dx2)));
            let dtau = (eta * rt + dk / tau + dot(c, &dx2) + ht.dot(&dzt2)) / den;
            let dx: Vec<f64> = dx2.iter().zip(&dx1).map(|(a, b)| a - dtau * b).collect();
            let dzt = dzt2.combine(-dtau, &dzt1);
            let dkappa = (dk - kappa * dtau) / tau;
            let dst = u.combine(-1.0, &dzt);
            Direction { dx, ds: dst, dz: dzt, dtau, dkappa }
        };
        let step_len = |d: &Direction| -> f64 {
            let mut a = max_step(&lam, &d.ds).min(max_step(&lam, &d.dz));
            if d.dtau < 0.0 {
                a = a.min(-tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-kappa / d.dkappa);
            }
            a
        };

        let lv = lam.to_vec();
        let mut ds_aff = lv.jprod(&lv);
        ds_aff.scale(-1.0);
        let aff = direction(1.0, &ds_aff, -tau * kappa);
        let alpha_aff = step_len(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);
        let mu = (gap + tau * kappa) / (degree + 1.0);

        let mut ds = ds_aff.combine(-1.0, &aff.ds.jprod(&aff.dz));
        ds.axpy(sigma * mu, &e);
        let dk = -tau * kappa - aff.dtau * aff.dkappa + sigma * mu;
        let dir = direction(1.0 - sigma, &ds, dk);
        let mut alpha = (0.99 * step_len(&dir)).min(1.0);

        loop {
            let st_new = lv.combine(alpha, &dir.ds);
            let zt_new = lv.combine(alpha, &dir.dz);
            let s_new = sc.wt(&st_new);
            let z_new = sc.w_inv(&zt_new);
            let mut sc_new = sc.clone();
            let mut lam_new = Scaled { lin: vec![0.0; l.lin], soc: Vec::new(), psd: Vec::new() };
            let mut ok = sc_new.set_lin_soc(&s_new, &z_new, &mut lam_new).is_ok();
            if ok {
                for k in 0..l.psd.len() {
                    match psd_rescale(&sc.psd[k], &st_new.psd[k], &zt_new.psd[k]) {
                        Ok((p, d)) => {
                            sc_new.psd[k] = p;
                            lam_new.psd.push(d);
                        }
                        Err(_) => {
                            ok = false;
                            break;
                        }
                    }
                }
            }
            if ok {
                x.iter_mut().zip(&dir.dx).for_each(|(a, b)| *a += alpha * b);
                tau += alpha * dir.dtau;
                kappa += alpha * dir.dkappa;
                s = s_new;
                z = z_new;
                sc = sc_new;
                lam = lam_new;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return stop(last, "line search failed", best);
            }
        }
        if !(tau.is_finite() && kappa.is_finite() && tau > 0.0 && kappa > 0.0) {
            return stop(last, "homogeneous variables degenerated", best);
        }
    }
    last
}
