use num_complex::Complex64;

use super::projector::NullSpaceProjector;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

/// Weighted least-squares beam-pattern fit on explicit sample dictionaries.
///
/// Objective: `‖A_in^H w - d‖^2 + lambda_sl ‖W A_sl^H w‖^2 + mu ‖w‖^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct LsProblem {
    pub a_in: CMat,
    pub desired: CVec,
    pub a_sl: CMat,
    /// Diagonal of `W`, one entry per sidelobe sample.
    pub sl_weights: Vec<f64>,
    pub sidelobe_weight: f64,
}

impl LsProblem {
    fn check(&self) -> Result<()> {
        let m = self.a_in.nrows();
        if self.desired.len() != self.a_in.ncols() {
            return Err(Error::Dimension { expected: self.a_in.ncols(), found: self.desired.len() });
        }
        if self.a_sl.nrows() != m {
            return Err(Error::Dimension { expected: m, found: self.a_sl.nrows() });
        }
        if self.sl_weights.len() != self.a_sl.ncols() {
            return Err(Error::Dimension { expected: self.a_sl.ncols(), found: self.sl_weights.len() });
        }
        Ok(())
    }

    pub fn elements(&self) -> usize {
        self.a_in.nrows()
    }

    fn weighted_sidelobe(&self) -> CMat {
        let mut b = self.a_sl.clone();
        for (j, &wt) in self.sl_weights.iter().enumerate() {
            b.column_mut(j).scale_mut(wt);
        }
        b
    }

    /// Fit value including the Tikhonov term.
    pub fn objective(&self, w: &CVec, mu: f64) -> f64 {
        let fit = (self.a_in.ad_mul(w) - &self.desired).norm_squared();
        let sl = self.weighted_sidelobe().ad_mul(w).norm_squared();
        fit + self.sidelobe_weight * sl + mu * w.norm_squared()
    }

    /// Normal matrix `B_in B_in^H + lambda_sl B_sl B_sl^H` and right-hand side `B_in d` after
    /// mapping both dictionaries through `map` (`B = map A`).
    fn normal_equations(&self, map: Option<&CMat>) -> (CMat, CVec) {
        let apply = |a: &CMat| match map {
            Some(t) => t * a,
            None => a.clone(),
        };
        let b_in = apply(&self.a_in);
        let b_sl = apply(&self.weighted_sidelobe());
        let mut sys = &b_in * b_in.adjoint();
        if self.sidelobe_weight > 0.0 && b_sl.ncols() > 0 {
            sys.gemm(Complex64::new(self.sidelobe_weight, 0.0), &b_sl, &b_sl.adjoint(), Complex64::new(1.0, 0.0));
        }
        (sys, &b_in * &self.desired)
    }
}

fn add_diagonal(m: &mut CMat, v: f64) {
    for i in 0..m.nrows() {
        m[(i, i)] += v;
    }
}

fn solve(sys: CMat, rhs: CVec) -> Result<CVec> {
    let n = rhs.len();
    let x = linalg::solve_hpd(sys, &CMat::from_column_slice(n, 1, rhs.as_slice()))?;
    Ok(x.column(0).into_owned())
}

/// Hard-null least squares: solve in `z` with projected dictionaries, return `w = P_N z`.
pub fn solve_hard_ls(problem: &LsProblem, projector: &NullSpaceProjector, mu: f64) -> Result<CVec> {
    problem.check()?;
    if projector.elements() != problem.elements() {
        return Err(Error::Dimension { expected: problem.elements(), found: projector.elements() });
    }
    let p = projector.matrix();
    let (mut sys, rhs) = problem.normal_equations(Some(&p));
    add_diagonal(&mut sys, mu);
    let z = solve(sys, rhs)?;
    Ok(projector.apply(&z))
}

/// Soft-null least squares with penalty `lambda_blk ‖A_blk^H w‖^2` and optional power cap.
///
/// When the unconstrained solution exceeds `power_cap`, the extra ridge `nu` is found by bisection
/// so that `‖w‖^2` meets the cap.
pub fn solve_soft_ls(
    problem: &LsProblem,
    a_blk: &CMat,
    blocked_weight: f64,
    mu: f64,
    power_cap: Option<f64>,
) -> Result<CVec> {
    problem.check()?;
    if a_blk.nrows() != problem.elements() {
        return Err(Error::Dimension { expected: problem.elements(), found: a_blk.nrows() });
    }
    let (mut base, rhs) = problem.normal_equations(None);
    if blocked_weight > 0.0 && a_blk.ncols() > 0 {
        base.gemm(Complex64::new(blocked_weight, 0.0), a_blk, &a_blk.adjoint(), Complex64::new(1.0, 0.0));
    }
    let at = |nu: f64| {
        let mut sys = base.clone();
        add_diagonal(&mut sys, mu + nu);
        solve(sys, rhs.clone())
    };
    let w = at(0.0)?;
    let Some(cap) = power_cap else { return Ok(w) };
    if w.norm_squared() <= cap {
        return Ok(w);
    }
    let mut hi = base.diagonal().iter().map(|z| z.re).fold(1e-12, f64::max);
    while at(hi)?.norm_squared() > cap {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if at(mid)?.norm_squared() > cap {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// Orthonormal basis of `span(P_N A)` inside the null space of the blocked dictionary. Columns
/// whose projected residual falls below `rel_tol` times the largest column of `A` are dropped.
///
/// Columns kept near the drop tolerance are dominated by rounding error that leaves the null
/// space, so the first basis is projected again and re-orthonormalised.
pub fn gs_basis(projector: &NullSpaceProjector, target: &CMat, rel_tol: f64) -> Result<CMat> {
    if target.nrows() != projector.elements() {
        return Err(Error::Dimension { expected: projector.elements(), found: target.nrows() });
    }
    let project = |m: &CMat| -> CMat {
        let cols: Vec<CVec> = (0..m.ncols()).map(|j| projector.apply(&m.column(j).into_owned())).collect();
        if cols.is_empty() {
            CMat::zeros(m.nrows(), 0)
        } else {
            CMat::from_columns(&cols)
        }
    };
    let scale = (0..target.ncols()).map(|j| target.column(j).norm()).fold(0.0, f64::max);
    let first = linalg::orthonormal_basis_above(&project(target), rel_tol * scale);
    let basis = linalg::orthonormal_basis_above(&project(&first), rel_tol);
    if basis.ncols() == 0 {
        return Err(Error::invalid("sector is annihilated by the null-space projector"));
    }
    Ok(basis)
}

/// Least squares in the coordinates of an orthonormal basis `U`; returns `w = U c`.
pub fn solve_reduced(basis: &CMat, problem: &LsProblem, mu: f64) -> Result<CVec> {
    problem.check()?;
    if basis.nrows() != problem.elements() {
        return Err(Error::Dimension { expected: problem.elements(), found: basis.nrows() });
    }
    if basis.ncols() == 0 {
        return Ok(CVec::zeros(problem.elements()));
    }
    let (mut sys, rhs) = problem.normal_equations(Some(&basis.adjoint()));
    add_diagonal(&mut sys, mu);
    Ok(basis * solve(sys, rhs)?)
}
