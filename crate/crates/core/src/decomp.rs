//! Unitary-plus-finite-rank splittings of the model operator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{hyperplanes, GalerkinModel};
use crate::linalg::{self, CMatrix};

/// Relative singular-value cutoff for rank statements.
pub const RANK_TOL: f64 = 1e-8;
pub const UNITARY_TOL: f64 = 1e-8;
pub const CONTRACTION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `V = U on X, Vx = y`, `R = T − V`.
    Te,
    /// `T = PU|_K + PS|_K`.
    Contraction,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "te" => Ok(Self::Te),
            "contraction" => Ok(Self::Contraction),
            _ => Err(Error::Parse(format!("unknown method {s:?}, expected te or contraction"))),
        }
    }
}

/// Which case of the splitting applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `h, U⁻¹h ∉ K_m`: rank-one correction of `U` through the hyperplanes.
    HNotInK,
    /// `h ∈ K_m`: `U` leaves `K_m` invariant and is its own unitary part.
    HInK,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub unitarity_defect: f64,
    pub singvals_r: Vec<f64>,
    /// Operator norm of the splitting's `A`: `U|_K − V` for `te`,
    /// `PU|_K` for `contraction`.
    pub norm_a: f64,
    pub singvals_a: Vec<f64>,
    pub rank_r: usize,
    pub rank_a: usize,
}

impl Diagnostics {
    pub fn compute(v: &CMatrix, r: &CMatrix, a: &CMatrix) -> Self {
        let singvals_r = linalg::singular_values(r);
        let singvals_a = linalg::singular_values(a);
        Self {
            unitarity_defect: linalg::unitarity_defect(v),
            rank_r: linalg::numerical_rank(&singvals_r, RANK_TOL),
            rank_a: linalg::numerical_rank(&singvals_a, RANK_TOL),
            norm_a: singvals_a.first().copied().unwrap_or(0.0),
            singvals_r,
            singvals_a,
        }
    }
}

/// `T_mat = v + r`. For [`Method::Contraction`], `v` is the contraction
/// `PU|_K` and `r` the rank-one `PS|_K`.
#[derive(Clone, Debug)]
pub struct Splitting {
    pub method: Method,
    pub branch: Branch,
    pub v: CMatrix,
    pub r: CMatrix,
    pub a: CMatrix,
    pub diagnostics: Diagnostics,
}

impl Splitting {
    fn new(method: Method, branch: Branch, v: CMatrix, r: CMatrix, a: CMatrix) -> Self {
        let diagnostics = Diagnostics::compute(&v, &r, &a);
        Self { method, branch, v, r, a, diagnostics }
    }

    pub fn report(&self) -> SplitReport {
        SplitReport {
            method: self.method,
            branch: self.branch,
            unitarity_defect: self.diagnostics.unitarity_defect,
            singvals_r: self.diagnostics.singvals_r.clone(),
            norm_a: self.diagnostics.norm_a,
            singvals_a: self.diagnostics.singvals_a.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitReport {
    pub method: Method,
    pub branch: Branch,
    pub unitarity_defect: f64,
    #[serde(rename = "singvals_R")]
    pub singvals_r: Vec<f64>,
    #[serde(rename = "norm_A")]
    pub norm_a: f64,
    #[serde(rename = "singvals_A")]
    pub singvals_a: Vec<f64>,
}

/// `Vu = Uu + ⟨u, x⟩(y − Ux)` with `U` the compression to `K_m`. When `h`
/// lies in `K_m` numerically the compression is already unitary and
/// `V = U|_K`, `R = T − V = S|_K`.
pub fn te_split(model: &GalerkinModel) -> Result<Splitting> {
    let u = model.u_top();
    match hyperplanes(model) {
        Ok(hp) => {
            let x = CMatrix::from_column_slice(hp.x.len(), 1, hp.x.as_slice());
            let y = CMatrix::from_column_slice(hp.y.len(), 1, hp.y.as_slice());
            let v = &u + (&y - &u * &x) * x.adjoint();
            let r = &model.t_mat - &v;
            let a = &u - &v;
            Ok(Splitting::new(Method::Te, Branch::HNotInK, v, r, a))
        }
        Err(Error::HyperplaneDegenerate { .. }) => {
            let r = &model.t_mat - &u;
            let a = CMatrix::zeros(u.nrows(), u.ncols());
            Ok(Splitting::new(Method::Te, Branch::HInK, u, r, a))
        }
        Err(e) => Err(e),
    }
}

/// `A = PU|_K` and `S_part = T − A`.
pub fn contraction_split(model: &GalerkinModel) -> Splitting {
    let a = model.u_top();
    let s = &model.t_mat - &a;
    let branch = if model.h_in_span() { Branch::HInK } else { Branch::HNotInK };
    Splitting::new(Method::Contraction, branch, a.clone(), s, a)
}

pub fn split(model: &GalerkinModel, method: Method) -> Result<Splitting> {
    match method {
        Method::Te => te_split(model),
        Method::Contraction => Ok(contraction_split(model)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub quantity: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(quantity: &str, value: f64, limit: f64) -> Self {
        Self { quantity: quantity.into(), value, limit, pass: value <= limit }
    }
}

/// Every check of a splitting, recomputed from `v`, `r` and the model.
pub fn audit_checks(s: &Splitting, model: &GalerkinModel) -> Vec<Check> {
    let fresh = Diagnostics::compute(&s.v, &s.r, &s.a);
    let t = &model.t_mat;
    let scale = linalg::op_norm(t).max(1.0);
    let mut out = vec![Check::at_most("resummation", linalg::frob_diff(&(&s.v + &s.r), t) / scale, 1e-12)];
    let lam: Vec<_> = model.lambdas.iter().map(|l| l.to_complex()).collect();
    out.push(Check::at_most("spectrum_T", linalg::spectrum_distance(&linalg::eigenvalues(t), &lam), 1e-8));
    match s.method {
        Method::Te => {
            out.push(Check::at_most("unitarity_defect", fresh.unitarity_defect, UNITARY_TOL));
            let off_circle = linalg::eigenvalues(&s.v).iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max);
            out.push(Check::at_most("spectrum_V", off_circle, UNITARY_TOL));
            out.push(Check::at_most("sigma3_R", linalg::singular_ratio(&fresh.singvals_r, 2), RANK_TOL));
            out.push(Check::at_most("sigma2_A", linalg::singular_ratio(&fresh.singvals_a, 1), RANK_TOL));
        }
        Method::Contraction => {
            out.push(Check::at_most("norm_A", fresh.norm_a, 1.0 + CONTRACTION_TOL));
            out.push(Check::at_most("sigma2_S", linalg::singular_ratio(&fresh.singvals_r, 1), RANK_TOL));
        }
    }
    let drift = [
        (fresh.unitarity_defect - s.diagnostics.unitarity_defect).abs(),
        (fresh.norm_a - s.diagnostics.norm_a).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    out.push(Check::at_most("diagnostic_drift", drift, 1e-12));
    out
}

/// [`audit_checks`], failing on the first check that does not hold.
pub fn audit_splitting(s: &Splitting, model: &GalerkinModel) -> Result<Vec<Check>> {
    let checks = audit_checks(s, model);
    if let Some(c) = checks.iter().find(|c| !c.pass) {
        return Err(Error::AuditFailure { quantity: c.quantity.clone(), value: c.value, limit: c.limit });
    }
    Ok(checks)
}
