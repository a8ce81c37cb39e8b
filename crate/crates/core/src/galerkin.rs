//! The finite model on `K_m = span{h_{λ₁}, …, h_{λₘ}}`.
//!
//! The Hilbert space is `L₂` of a quadrature grid, so `U` (multiplication by
//! `w`) is exactly unitary and `w·h_λ = λh_λ − h` holds node by node. With
//! `W^{1/2}H = QR` for the matrix `H` of sampled `h_λ`, a vector with
//! coefficients `c` over the family has frame coordinates `Rc`, and
//!
//! * `T|_K = RΛR⁻¹`, from `Th_λ = λh_λ`,
//! * `h = Qa + ρe` with `e ⟂ K_m`,
//! * `U|_K = [RΛR⁻¹ − a·1ᵀR⁻¹ ; −ρ·1ᵀR⁻¹]` into `K_m ⊕ span{e}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::BinaryAngle;
use crate::conjugate::unit_difference;
use crate::eigenfield::{eigen_residual, quadrature_grid, verify_analytic, ConstructedFunctions, EigenResidual};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::Grid;
use crate::linalg::{self, c, CMatrix, CVector};

/// Pairing of `h_λ` with `g` used to define `T` on `K_m`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `⟨h_λ, g⟩ := 1`, so `Th_λ = λh_λ` exactly.
    #[default]
    Forced,
    /// `g := 0`: `T = U`. Only meaningful when `U(K_m) ⊆ K_m`.
    Zero,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Graded levels per end of each arc between deepest endpoints.
    pub graded_levels: u32,
    pub gauss: usize,
    /// Longest panel, in turns.
    pub max_panel: f64,
    pub bits: u32,
    /// Singular values of `W^{1/2}H` below `rank_tol·σ₁` are null directions.
    pub rank_tol: f64,
    /// `ρ/‖h‖` below this means `h ∈ K_m` numerically.
    pub membership_tol: f64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            graded_levels: 16,
            gauss: 3,
            max_panel: 1.0 / 1024.0,
            bits: 256,
            rank_tol: 1e-10,
            membership_tol: 1e-8,
            exec: Execution::default(),
        }
    }
}

/// `h` and `U⁻¹h` sampled on a grid, scaled by `√weight`.
#[derive(Clone, Debug)]
pub struct Samples {
    pub grid: Grid,
    pub points: Vec<Complex64>,
    pub sqrt_w: Vec<f64>,
    pub h: Vec<Complex64>,
}

impl Samples {
    pub fn new(cf: &ConstructedFunctions, grid: Grid, exec: Execution) -> Self {
        let h = exec.map_slice(grid.nodes(), |w| cf.h(w));
        let points = grid.points();
        let sqrt_w = grid.weights().iter().map(|w| w.sqrt()).collect();
        Self { grid, points, sqrt_w, h }
    }

    /// Samples on the graded quadrature grid of `cf.tree`.
    pub fn graded(cf: &ConstructedFunctions, cfg: &ModelConfig) -> Result<Self> {
        let grid = quadrature_grid(&cf.tree, cfg.graded_levels, cfg.gauss, cfg.max_panel, cfg.bits)?;
        Ok(Self::new(cf, grid, cfg.exec))
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    /// Column `√w_k · h(w_k)/(λ − w_k)`.
    pub fn h_lambda(&self, lambda: &BinaryAngle) -> CVector {
        CVector::from_iterator(
            self.len(),
            self.grid.nodes().iter().zip(&self.h).zip(&self.sqrt_w).map(|((w, h), s)| h * *s / unit_difference(lambda, w)),
        )
    }

    pub fn h_vec(&self) -> CVector {
        CVector::from_iterator(self.len(), self.h.iter().zip(&self.sqrt_w).map(|(h, s)| h * *s))
    }

    pub fn u_inv_h_vec(&self) -> CVector {
        CVector::from_iterator(self.len(), self.h.iter().zip(&self.sqrt_w).zip(&self.points).map(|((h, s), w)| h * *s * w.conj()))
    }
}

/// Complex matrix as row-major real and imaginary arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl From<&CMatrix> for ComplexMatrix {
    fn from(a: &CMatrix) -> Self {
        let (re, im) = linalg::to_re_im(a);
        Self { re, im }
    }
}

impl ComplexMatrix {
    pub fn to_matrix(&self) -> Result<CMatrix> {
        if self.re.is_empty() {
            return Ok(CMatrix::zeros(0, 0));
        }
        linalg::from_re_im(&self.re, &self.im).ok_or_else(|| Error::Parse("ragged complex matrix".into()))
    }
}

fn column(v: &CVector) -> CMatrix {
    CMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinModel {
    /// Retained points, in the caller's order.
    pub lambdas: Vec<BinaryAngle>,
    /// Points dropped as numerically dependent.
    pub dropped: Vec<BinaryAngle>,
    pub coupling: Coupling,
    /// `⟨h_{λ_i}, h_{λ_j}⟩` over all requested points.
    pub gram: CMatrix,
    /// `R` of `W^{1/2}H = QR` on the retained points.
    pub r: CMatrix,
    /// `R⁻¹`: column `k` holds the coefficients of the `k`-th frame vector
    /// over the retained `h_λ`.
    pub frame: CMatrix,
    pub t_mat: CMatrix,
    /// Frame coordinates of the projection of `h`, and `‖h − Pₖh‖`.
    pub h_coords: CVector,
    pub h_residual: f64,
    pub h_norm: f64,
    pub u_inv_h_coords: CVector,
    pub u_inv_h_residual: f64,
    pub u_inv_h_norm: f64,
    /// `σ_max/σ_min` of the Gram matrix of the retained points.
    pub condition: f64,
    pub effective_rank: usize,
    pub membership_tol: f64,
}

impl GalerkinModel {
    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    fn lambda_values(&self) -> Vec<Complex64> {
        self.lambdas.iter().map(|l| l.to_complex()).collect()
    }

    /// `1ᵀR⁻¹` as a row.
    fn ones_rinv(&self) -> CMatrix {
        let m = self.dim();
        CMatrix::from_element(1, m, c(1.0)) * &self.frame
    }

    /// Top block of `U|_K`: the compression `P·U|_K`.
    pub fn u_top(&self) -> CMatrix {
        let lam = CMatrix::from_diagonal(&CVector::from_vec(self.lambda_values()));
        &self.r * lam * &self.frame - column(&self.h_coords) * self.ones_rinv()
    }

    /// Row of `U|_K` along the unit normal `e` of `K_m` in `K_m + span{h}`.
    pub fn u_normal_row(&self) -> CMatrix {
        self.ones_rinv() * c(-self.h_residual)
    }

    /// `U|_K` as an `(m+1) × m` matrix into `K_m ⊕ span{e}`.
    pub fn u_full(&self) -> CMatrix {
        let m = self.dim();
        let mut out = CMatrix::zeros(m + 1, m);
        out.view_mut((0, 0), (m, m)).copy_from(&self.u_top());
        out.view_mut((m, 0), (1, m)).copy_from(&self.u_normal_row());
        out
    }

    /// The model on the first `k` points. Prefixes of a QR factorization are
    /// the factorizations of the column prefixes, so nothing is resampled.
    /// Requires that no point was dropped.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        let m = self.dim();
        if k == 0 || k > m {
            return Err(Error::Domain(format!("prefix {k} of a {m}-point model")));
        }
        if !self.dropped.is_empty() {
            return Err(Error::Domain("prefix of a rank-deficient model".into()));
        }
        let r = self.r.view((0, 0), (k, k)).into_owned();
        let frame = linalg::upper_inverse(&r).ok_or_else(|| Error::Domain("triangular factor is singular".into()))?;
        let tail = |v: &CVector, rho: f64| (rho * rho + v.rows(k, m - k).norm_squared()).sqrt();
        let (lo, hi) = linalg::hermitian_extremes(&(r.adjoint() * &r));
        let mut out = Self {
            lambdas: self.lambdas[..k].to_vec(),
            dropped: vec![],
            coupling: self.coupling,
            gram: self.gram.view((0, 0), (k, k)).into_owned(),
            r,
            frame,
            t_mat: CMatrix::zeros(0, 0),
            h_coords: self.h_coords.rows(0, k).into_owned(),
            h_residual: tail(&self.h_coords, self.h_residual),
            h_norm: self.h_norm,
            u_inv_h_coords: self.u_inv_h_coords.rows(0, k).into_owned(),
            u_inv_h_residual: tail(&self.u_inv_h_coords, self.u_inv_h_residual),
            u_inv_h_norm: self.u_inv_h_norm,
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
            effective_rank: k,
            membership_tol: self.membership_tol,
        };
        out.t_mat = match self.coupling {
            Coupling::Forced => {
                let lam = CMatrix::from_diagonal(&CVector::from_vec(out.lambda_values()));
                &out.r * lam * &out.frame
            }
            Coupling::Zero => out.u_top(),
        };
        Ok(out)
    }

    /// `h ∈ K_m` up to `membership_tol` relative.
    pub fn h_in_span(&self) -> bool {
        self.h_residual <= self.membership_tol * self.h_norm
    }
}

/// Builds the model on the retained subset of `lambdas`.
pub fn build_model_on(samples: &Samples, lambdas: &[BinaryAngle], coupling: Coupling, cfg: &ModelConfig) -> Result<GalerkinModel> {
    if lambdas.is_empty() {
        return Err(Error::Domain("model needs at least one point".into()));
    }
    for (i, a) in lambdas.iter().enumerate() {
        if lambdas[..i].contains(a) {
            return Err(Error::Domain(format!("repeated point {a}")));
        }
    }
    let n = samples.len();
    let m = lambdas.len();
    let cols = cfg.exec.map_slice(lambdas, |l| samples.h_lambda(l));
    let mut h_all = CMatrix::zeros(n, m);
    for (j, col) in cols.iter().enumerate() {
        h_all.set_column(j, col);
    }

    let mut gram = CMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = cols[j].dotc(&cols[i]);
            gram[(i, j)] = v;
            gram[(j, i)] = v.conj();
        }
    }
    let (lo, hi) = linalg::hermitian_extremes(&gram);
    let tol = 1e-12 * hi.max(f64::MIN_POSITIVE);
    if lo < -tol {
        return Err(Error::QuadratureInconsistency { min_eigenvalue: lo, tolerance: tol });
    }

    let (order, diag) = linalg::pivot_order(&h_all);
    let top = diag.first().copied().unwrap_or(0.0);
    let rank = diag.iter().take_while(|&&d| d > cfg.rank_tol * top).count().max(1);
    let mut keep: Vec<usize> = order[..rank].to_vec();
    keep.sort_unstable();
    let kept: Vec<BinaryAngle> = keep.iter().map(|&j| lambdas[j]).collect();
    let dropped: Vec<BinaryAngle> = (0..m).filter(|j| !keep.contains(j)).map(|j| lambdas[j]).collect();
    let mut h = CMatrix::zeros(n, rank);
    for (k, &j) in keep.iter().enumerate() {
        h.set_column(k, &cols[j]);
    }

    let (q, r) = linalg::thin_qr(&h);
    let frame = linalg::upper_inverse(&r).ok_or_else(|| Error::Domain("triangular factor is singular".into()))?;
    let project = |v: CVector| -> (CVector, f64, f64) {
        let norm = v.norm();
        let mut coords = q.adjoint() * &v;
        let mut resid = &v - &q * &coords;
        // one step of reorthogonalization
        let again = q.adjoint() * &resid;
        resid -= &q * &again;
        coords += again;
        (coords, resid.norm(), norm)
    };
    let (h_coords, h_residual, h_norm) = project(samples.h_vec());
    let (u_inv_h_coords, u_inv_h_residual, u_inv_h_norm) = project(samples.u_inv_h_vec());

    let kept_gram = h.adjoint() * &h;
    let (glo, ghi) = linalg::hermitian_extremes(&kept_gram);
    let condition = if glo > 0.0 { ghi / glo } else { f64::INFINITY };

    let mut model = GalerkinModel {
        lambdas: kept,
        dropped,
        coupling,
        gram,
        r,
        frame,
        t_mat: CMatrix::zeros(0, 0),
        h_coords,
        h_residual,
        h_norm,
        u_inv_h_coords,
        u_inv_h_residual,
        u_inv_h_norm,
        condition,
        effective_rank: rank,
        membership_tol: cfg.membership_tol,
    };
    model.t_mat = match coupling {
        Coupling::Forced => {
            let lam = CMatrix::from_diagonal(&CVector::from_vec(model.lambda_values()));
            &model.r * lam * &model.frame
        }
        Coupling::Zero => model.u_top(),
    };
    Ok(model)
}

/// Samples on the graded grid, then [`build_model_on`].
pub fn build_model(cf: &ConstructedFunctions, lambdas: &[BinaryAngle], cfg: &ModelConfig) -> Result<GalerkinModel> {
    let samples = Samples::graded(cf, cfg)?;
    build_model_on(&samples, lambdas, Coupling::Forced, cfg)
}

/// `m` deepest-level endpoints spread evenly in tree order. For `m` dividing
/// the endpoint count, smaller power-of-two choices give nested sets.
pub fn sample_lambdas(endpoints: &[BinaryAngle], m: usize) -> Result<Vec<BinaryAngle>> {
    let n = endpoints.len();
    if m == 0 || m > n {
        return Err(Error::Domain(format!("cannot pick {m} of {n} endpoints")));
    }
    Ok((0..m).map(|k| endpoints[k * n / m]).collect())
}

/// The same points as [`sample_lambdas`] for a power-of-two `m`, reordered so
/// that every power-of-two prefix is the sample of that size.
pub fn sample_lambdas_nested(endpoints: &[BinaryAngle], m: usize) -> Result<Vec<BinaryAngle>> {
    if !m.is_power_of_two() {
        return Err(Error::Domain(format!("nested samples need a power of two, got {m}")));
    }
    let base = sample_lambdas(endpoints, m)?;
    let bits = m.trailing_zeros();
    Ok((0..m).map(|k| base[if bits == 0 { 0 } else { k.reverse_bits() >> (usize::BITS - bits) }]).collect())
}

/// Unit normals to `X_m = {Σcⱼh_{λⱼ} : Σcⱼ = 0}` and
/// `Y_m = {Σdⱼh_{λⱼ} : Σdⱼ/λⱼ = 0}` in frame coordinates, with orthonormal
/// bases of the hyperplanes.
#[derive(Clone, Debug)]
pub struct Hyperplanes {
    pub x: CVector,
    pub y: CVector,
    pub x_basis: CMatrix,
    pub y_basis: CMatrix,
}

fn complement_basis(v: &CVector) -> CMatrix {
    let m = v.len();
    let p = CMatrix::identity(m, m) - column(v) * column(v).adjoint();
    let svd = p.svd(true, false);
    let u = svd.u.expect("requested");
    let idx: Vec<usize> = (0..m).filter(|&i| svd.singular_values[i] > 0.5).collect();
    CMatrix::from_fn(m, idx.len(), |i, k| u[(i, idx[k])])
}

pub fn hyperplanes(model: &GalerkinModel) -> Result<Hyperplanes> {
    if model.h_in_span() {
        return Err(Error::HyperplaneDegenerate { residual: model.h_residual / model.h_norm });
    }
    let m = model.dim();
    let rinv_adj = model.frame.adjoint();
    let x = &rinv_adj * CVector::from_element(m, c(1.0));
    let lam = CVector::from_iterator(m, model.lambdas.iter().map(|l| l.to_complex()));
    let y = &rinv_adj * lam;
    let x = x.normalize();
    let y = y.normalize();
    let x_basis = complement_basis(&x);
    let y_basis = complement_basis(&y);
    Ok(Hyperplanes { x, y, x_basis, y_basis })
}

/// Orthogonal residuals of `h` and `U⁻¹h` against `K_m`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MembershipRow {
    pub m: usize,
    pub h_residual: f64,
    pub u_inv_h_residual: f64,
    pub h_norm: f64,
    pub u_inv_h_norm: f64,
}

pub fn membership_residuals(model: &GalerkinModel) -> MembershipRow {
    MembershipRow {
        m: model.dim(),
        h_residual: model.h_residual,
        u_inv_h_residual: model.u_inv_h_residual,
        h_norm: model.h_norm,
        u_inv_h_norm: model.u_inv_h_norm,
    }
}

/// Residuals for the nested prefixes `lambdas[..m]`, `m ∈ ms`; `m = 0` is the
/// empty span.
pub fn membership_trend(samples: &Samples, lambdas: &[BinaryAngle], ms: &[usize], cfg: &ModelConfig) -> Result<Vec<MembershipRow>> {
    ms.iter()
        .map(|&m| {
            if m == 0 {
                let h = samples.h_vec().norm();
                let u = samples.u_inv_h_vec().norm();
                return Ok(MembershipRow { m: 0, h_residual: h, u_inv_h_residual: u, h_norm: h, u_inv_h_norm: u });
            }
            let model = build_model_on(samples, &lambdas[..m.min(lambdas.len())], Coupling::Forced, cfg)?;
            Ok(MembershipRow { m, ..membership_residuals(&model) })
        })
        .collect()
}

/// Per-point residual of `T h_λ = λ h_λ` inside the model, in frame
/// coordinates, with the quadrature value of `|⟨h_λ, g⟩ − 1|` alongside.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelResidual {
    pub lambda: BinaryAngle,
    /// `‖(T_mat − λ)Rδ_j‖ / ‖Rδ_j‖`.
    pub eigen_residual: f64,
    /// `‖U h_λ − (λh_λ − h)‖ / ‖h‖` in `K_m ⊕ span{e}`.
    pub shift_residual: f64,
}

pub fn model_residuals(model: &GalerkinModel) -> Vec<ModelResidual> {
    let m = model.dim();
    let u = model.u_full();
    let mut h_full = CVector::zeros(m + 1);
    h_full.rows_mut(0, m).copy_from(&model.h_coords);
    h_full[m] = c(model.h_residual);
    (0..m)
        .map(|j| {
            let v = model.r.column(j).into_owned();
            let lam = model.lambdas[j].to_complex();
            let eig = (&model.t_mat * &v - &v * lam).norm() / v.norm();
            let mut lv = CVector::zeros(m + 1);
            lv.rows_mut(0, m).copy_from(&(&v * lam));
            let shift = (&u * &v - (lv - &h_full)).norm() / model.h_norm;
            ModelResidual { lambda: model.lambdas[j], eigen_residual: eig, shift_residual: shift }
        })
        .collect()
}

/// One row of the `eigen-residuals` table: the in-model residuals of
/// [`ModelResidual`] and, on the sampling grid, `‖Th_λ − λh_λ‖/‖h‖` with the
/// analytic coupling `⟨h_λ, g⟩`, next to `|⟨h_λ, g⟩ − 1|`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenResidualRow {
    pub lambda: BinaryAngle,
    pub model_eigen: f64,
    pub model_shift: f64,
    pub field_measured: f64,
    pub field_predicted: f64,
}

pub fn eigen_residual_rows(model: &GalerkinModel, cf: &ConstructedFunctions, grid: &Grid, exec: Execution) -> Result<Vec<EigenResidualRow>> {
    let inside = model_residuals(model);
    let field = exec.map_slice(&model.lambdas, |l| -> Result<EigenResidual> {
        let coupling = verify_analytic(&cf.series, l)?[0].measured;
        Ok(eigen_residual(cf, l, coupling, grid))
    });
    inside
        .into_iter()
        .zip(field)
        .map(|(r, f)| {
            let f = f?;
            Ok(EigenResidualRow {
                lambda: r.lambda,
                model_eigen: r.eigen_residual,
                model_shift: r.shift_residual,
                field_measured: f.measured,
                field_predicted: f.predicted,
            })
        })
        .collect()
}

pub fn write_eigen_residual_csv<W: std::io::Write>(rows: &[EigenResidualRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["lambda_hex", "model_eigen", "model_shift", "field_measured", "field_predicted"])?;
    for r in rows {
        wr.write_record([
            r.lambda.to_hex(),
            format!("{:e}", r.model_eigen),
            format!("{:e}", r.model_shift),
            format!("{:e}", r.field_measured),
            format!("{:e}", r.field_predicted),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Serialized model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub lambdas: Vec<BinaryAngle>,
    pub dropped: Vec<BinaryAngle>,
    pub coupling: Coupling,
    pub gram: ComplexMatrix,
    pub r: ComplexMatrix,
    pub frame: ComplexMatrix,
    pub t_mat: ComplexMatrix,
    pub h_coords: Vec<Complex64>,
    pub h_residual: f64,
    pub h_norm: f64,
    pub u_inv_h_coords: Vec<Complex64>,
    pub u_inv_h_residual: f64,
    pub u_inv_h_norm: f64,
    pub condition: f64,
    pub effective_rank: usize,
    pub membership_tol: f64,
}

impl GalerkinModel {
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            lambdas: self.lambdas.clone(),
            dropped: self.dropped.clone(),
            coupling: self.coupling,
            gram: (&self.gram).into(),
            r: (&self.r).into(),
            frame: (&self.frame).into(),
            t_mat: (&self.t_mat).into(),
            h_coords: self.h_coords.iter().copied().collect(),
            h_residual: self.h_residual,
            h_norm: self.h_norm,
            u_inv_h_coords: self.u_inv_h_coords.iter().copied().collect(),
            u_inv_h_residual: self.u_inv_h_residual,
            u_inv_h_norm: self.u_inv_h_norm,
            condition: self.condition,
            effective_rank: self.effective_rank,
            membership_tol: self.membership_tol,
        }
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        let m = f.lambdas.len();
        let model = Self {
            lambdas: f.lambdas.clone(),
            dropped: f.dropped.clone(),
            coupling: f.coupling,
            gram: f.gram.to_matrix()?,
            r: f.r.to_matrix()?,
            frame: f.frame.to_matrix()?,
            t_mat: f.t_mat.to_matrix()?,
            h_coords: CVector::from_vec(f.h_coords.clone()),
            h_residual: f.h_residual,
            h_norm: f.h_norm,
            u_inv_h_coords: CVector::from_vec(f.u_inv_h_coords.clone()),
            u_inv_h_residual: f.u_inv_h_residual,
            u_inv_h_norm: f.u_inv_h_norm,
            condition: f.condition,
            effective_rank: f.effective_rank,
            membership_tol: f.membership_tol,
        };
        let square = |a: &CMatrix| a.shape() == (m, m);
        if !(square(&model.r) && square(&model.frame) && square(&model.t_mat) && model.h_coords.len() == m) {
            return Err(Error::Parse(format!("model matrices do not match {m} points")));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cantor::{build_cantor, cover_level_set, CoverConfig};
    use crate::lacunary::LacunarySeries;
    use std::sync::OnceLock;

    struct Fixture {
        cf: ConstructedFunctions,
        samples: Samples,
    }

    fn fixture() -> &'static Fixture {
        static F: OnceLock<Fixture> = OnceLock::new();
        F.get_or_init(|| {
            let series = LacunarySeries::default();
            let cover = cover_level_set(&series, &CoverConfig::default()).unwrap();
            let tree = build_cantor(&cover, 8, 0).unwrap();
            let cf = ConstructedFunctions::new(tree, series);
            let samples = Samples::graded(&cf, &ModelConfig::default()).unwrap();
            Fixture { cf, samples }
        })
    }

    fn lambdas(m: usize) -> Vec<BinaryAngle> {
        sample_lambdas(&fixture().cf.tree.endpoints(), m).unwrap()
    }

    fn model(m: usize) -> GalerkinModel {
        build_model_on(&fixture().samples, &lambdas(m), Coupling::Forced, &ModelConfig::default()).unwrap()
    }

    #[test]
    fn single_point_model() {
        let md = model(1);
        assert_eq!(md.dim(), 1);
        assert!((md.t_mat[(0, 0)] - md.lambdas[0].to_complex()).norm() < 1e-14);
        assert!((md.r[(0, 0)].norm() - md.gram[(0, 0)].re.sqrt()).abs() < 1e-10 * md.r[(0, 0)].norm());
    }

    #[test]
    fn two_point_spectrum() {
        let md = model(2);
        let ev = linalg::eigenvalues(&md.t_mat);
        let lam: Vec<_> = md.lambdas.iter().map(|l| l.to_complex()).collect();
        assert!(linalg::spectrum_distance(&ev, &lam) < 1e-8);
    }

    #[test]
    fn gram_is_hermitian_exactly() {
        let md = model(8);
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(md.gram[(i, j)], md.gram[(j, i)].conj());
            }
        }
    }

    #[test]
    fn u_restricted_to_k_is_an_isometry_and_matches_the_grid() {
        let f = fixture();
        let md = model(16);
        let u = md.u_full();
        assert!(linalg::unitarity_defect(&u) < 1e-8, "{}", linalg::unitarity_defect(&u));
        // compare with multiplication by w applied to the frame directly
        let h: CMatrix = {
            let cols: Vec<_> = md.lambdas.iter().map(|l| f.samples.h_lambda(l)).collect();
            CMatrix::from_columns(&cols)
        };
        let q = &h * &md.frame;
        let wq = CMatrix::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] * f.samples.points[i]);
        let direct = q.adjoint() * wq;
        assert!(linalg::frob_diff(&direct, &md.u_top()) < 1e-8 * md.dim() as f64);
    }

    #[test]
    fn hyperplane_oracle_for_antipodal_points() {
        // λ = 1, −1: Σc = 0 gives c ∝ (1, −1); Σc/λ = 0 gives d ∝ (1, 1)
        let f = fixture();
        let pts = [BinaryAngle::zero(256).unwrap(), BinaryAngle::from_dyadic(1, 1, 256).unwrap()];
        let md = build_model_on(&f.samples, &pts, Coupling::Forced, &ModelConfig::default()).unwrap();
        let hp = hyperplanes(&md).unwrap();
        let in_x = &md.r * CVector::from_vec(vec![c(1.0), c(-1.0)]);
        let in_y = &md.r * CVector::from_vec(vec![c(1.0), c(1.0)]);
        assert!(hp.x.dotc(&in_x).norm() < 1e-10 * in_x.norm());
        assert!(hp.y.dotc(&in_y).norm() < 1e-10 * in_y.norm());
    }

    #[test]
    fn hyperplane_structure() {
        let md = model(16);
        let hp = hyperplanes(&md).unwrap();
        let m = md.dim();
        assert_eq!(hp.x_basis.ncols(), m - 1);
        assert_eq!(hp.y_basis.ncols(), m - 1);
        assert!((hp.x_basis.adjoint() * column(&hp.x)).norm() < 1e-10);
        // U maps X into K_m: the normal component vanishes
        let e_row = md.u_normal_row() * &hp.x_basis;
        assert!(e_row.norm() < 1e-8 * md.h_norm.max(1.0), "{}", e_row.norm());
        // and U(X) ⟂ y
        let ux = md.u_top() * &hp.x_basis;
        assert!((column(&hp.y).adjoint() * ux).norm() < 1e-8);
    }

    #[test]
    fn membership_trend_is_monotone() {
        let f = fixture();
        let ls = lambdas(32);
        let rows = membership_trend(&f.samples, &ls, &[0, 4, 8, 16, 32], &ModelConfig::default()).unwrap();
        assert!((rows[0].h_residual - rows[0].u_inv_h_residual).abs() < 1e-12 * rows[0].h_residual);
        for w in rows.windows(2) {
            assert!(w[1].h_residual <= w[0].h_residual * (1.0 + 1e-9), "{rows:?}");
        }
        for r in &rows {
            assert!((r.h_norm - r.u_inv_h_norm).abs() < 1e-12 * r.h_norm);
        }
    }

    #[test]
    fn h_in_span_when_the_span_fills_the_space() {
        // on an 8-node grid, 8 distinct points span everything
        let f = fixture();
        let grid = Grid::uniform(8, true, 256).unwrap();
        let samples = Samples::new(&f.cf, grid, Execution::Sequential);
        let pts: Vec<_> = (0..8).map(|k| BinaryAngle::from_dyadic(k, 3, 256).unwrap()).collect();
        let md = build_model_on(&samples, &pts, Coupling::Forced, &ModelConfig::default()).unwrap();
        assert_eq!(md.dim(), 8);
        assert!(md.h_in_span());
        assert!(matches!(hyperplanes(&md), Err(Error::HyperplaneDegenerate { .. })));
    }

    #[test]
    fn nested_samples_have_nested_prefixes() {
        let e = fixture().cf.tree.endpoints();
        let big = sample_lambdas_nested(&e, 32).unwrap();
        for m in [1, 2, 4, 8, 16] {
            let mut small = sample_lambdas(&e, m).unwrap();
            let mut prefix = big[..m].to_vec();
            small.sort();
            prefix.sort();
            assert_eq!(small, prefix);
        }
    }

    #[test]
    fn repeated_points_rejected() {
        let l = lambdas(4);
        let r = build_model_on(&fixture().samples, &[l[0], l[1], l[0]], Coupling::Forced, &ModelConfig::default());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn residuals_inside_the_model() {
        for r in model_residuals(&model(16)) {
            assert!(r.eigen_residual < 1e-10, "{r:?}");
            assert!(r.shift_residual < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn field_residual_matches_the_coupling_defect() {
        let f = fixture();
        let md = model(8);
        let rows = eigen_residual_rows(&md, &f.cf, &f.samples.grid, Execution::Sequential).unwrap();
        for r in &rows {
            assert!((r.field_measured - r.field_predicted).abs() <= 1e-10 * r.field_predicted, "{r:?}");
        }
        let mut buf = vec![];
        write_eigen_residual_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 9);
    }

    #[test]
    fn prefix_matches_a_fresh_build() {
        let f = fixture();
        let ls = sample_lambdas_nested(&f.cf.tree.endpoints(), 16).unwrap();
        let cfg = ModelConfig::default();
        let big = build_model_on(&f.samples, &ls, Coupling::Forced, &cfg).unwrap();
        let small = build_model_on(&f.samples, &ls[..8], Coupling::Forced, &cfg).unwrap();
        let p = big.prefix(8).unwrap();
        assert!(linalg::frob_diff(&p.t_mat, &small.t_mat) < 1e-10);
        assert!((p.h_residual - small.h_residual).abs() < 1e-10 * small.h_norm);
        assert!((p.condition / small.condition - 1.0).abs() < 1e-6);
        assert!(big.prefix(17).is_err());
    }

    #[test]
    fn json_round_trip() {
        let md = model(4);
        let back = GalerkinModel::from_json(&md.to_json().unwrap()).unwrap();
        assert_eq!(back, md);
    }

    #[test]
    fn condition_grows_with_nested_sets() {
        let c: Vec<f64> = [2, 4, 8, 16].iter().map(|&m| model(m).condition).collect();
        assert!(c.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9)), "{c:?}");
    }
}
