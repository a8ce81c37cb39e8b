use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hypercyclic::belov::{belov_check, BelovParams};
use hypercyclic::cantor::{build_cantor, cover_level_set, integrability_report, ArcStatus, CantorTree, CoverConfig};
use hypercyclic::decomp::{self, Method};
use hypercyclic::eigenfield::{verify_identity_m02, ConstructedFunctions, DirectConfig, IdentityRecord, PathKind, PathSelection};
use hypercyclic::galerkin::{
    build_model_on, eigen_residual_rows, membership_trend, sample_lambdas, sample_lambdas_nested, write_eigen_residual_csv, Coupling,
    GalerkinModel, ModelConfig, Samples,
};
use hypercyclic::lacunary::tail_bound;
use hypercyclic::linalg::{self, CMatrix, CVector};
use hypercyclic::orbit::{self, CrowdingRow};
use hypercyclic::{BinaryAngle, Execution};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{Config, LambdaSpec};
use crate::manifest::CheckOutcome;

pub const TREE: &str = "tree.json";
pub const MODEL: &str = "model.json";

/// Files a stage wrote (relative to the output directory) and its checks.
#[derive(Debug, Default)]
pub struct StageOutput {
    pub artifacts: Vec<String>,
    pub checks: Vec<CheckOutcome>,
}

/// Upstream artifacts, by default inside the output directory.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub tree: PathBuf,
    pub model: PathBuf,
}

impl Inputs {
    pub fn in_dir(out: &Path) -> Self {
        Self { tree: out.join(TREE), model: out.join(MODEL) }
    }
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T, artifacts: &mut Vec<String>) -> Result<()> {
    std::fs::write(out.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    artifacts.push(name.into());
    Ok(())
}

fn create(out: &Path, name: &str, artifacts: &mut Vec<String>) -> Result<BufWriter<File>> {
    artifacts.push(name.into());
    Ok(BufWriter::new(File::create(out.join(name)).with_context(|| format!("creating {name}"))?))
}

pub fn load_tree(path: &Path) -> Result<CantorTree> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading tree {}", path.display()))?;
    Ok(CantorTree::from_json(&text)?)
}

pub fn load_model(path: &Path) -> Result<GalerkinModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    Ok(GalerkinModel::from_json(&text)?)
}

fn model_config(cfg: &Config) -> ModelConfig {
    ModelConfig {
        graded_levels: cfg.model.graded_levels,
        gauss: cfg.model.gauss,
        max_panel: cfg.model.max_panel,
        bits: cfg.series.bits,
        rank_tol: cfg.model.rank_tol,
        membership_tol: cfg.model.membership_tol,
        exec: Execution::Parallel,
    }
}

pub fn belov(cfg: &Config, out: &Path) -> Result<StageOutput> {
    let mut o = StageOutput::default();
    let report = belov_check(&BelovParams::default(), cfg.belov.m_max)?;
    write_json(out, "belov.json", &report, &mut o.artifacts)?;
    for r in &report.records {
        let name = match r.m {
            Some(m) => format!("{:?}[m={m}]", r.inequality),
            None => format!("{:?}", r.inequality),
        };
        o.checks.push(CheckOutcome::flag(&name, r.pass, "belov.json:records.pass"));
    }
    Ok(o)
}

#[derive(Serialize)]
struct CantorReport {
    cover: CoverSummary,
    check: hypercyclic::cantor::TreeCheck,
    depth: usize,
    compare_depth: usize,
    alpha: f64,
    integral: f64,
    integral_compare: f64,
    relative_difference: f64,
    max_gap_closed_form_error: f64,
    report: hypercyclic::cantor::IntegrabilityReport,
}

#[derive(Serialize)]
struct CoverSummary {
    delta: f64,
    resolution_log2: u32,
    candidate: usize,
    excluded: usize,
    unresolved: usize,
    candidate_measure: f64,
}

pub fn cantor(cfg: &Config, out: &Path) -> Result<StageOutput> {
    let mut o = StageOutput::default();
    let series = cfg.series()?;
    let cc = CoverConfig {
        delta: cfg.cantor.delta,
        resolution_log2: cfg.cantor.resolution_log2,
        witness_budget: cfg.cantor.witness_budget,
        bits: cfg.series.bits,
        exec: Execution::Parallel,
    };
    let cover = cover_level_set(&series, &cc)?;
    let tree = build_cantor(&cover, cfg.cantor.depth, cfg.seed)?;
    std::fs::write(out.join(TREE), tree.to_json()? + "\n")?;
    o.artifacts.push(TREE.into());

    let check = tree.check();
    let alpha = cfg.cantor.alpha;
    let full = integrability_report(&tree, alpha)?;
    let shallow = integrability_report(&tree.truncated(cfg.cantor.compare_depth), alpha)?;
    let rel = (full.total_chordal - shallow.total_chordal).abs() / full.total_chordal;
    let gap_err = full.gaps.iter().map(|g| (g.flat_quadrature - g.closed_form).abs() / g.closed_form).fold(0.0, f64::max);
    o.checks.push(CheckOutcome::flag("tree_nesting", check.nesting, "cantor_report.json:check.nesting"));
    o.checks.push(CheckOutcome::flag("tree_ordering", check.ordering, "cantor_report.json:check.ordering"));
    o.checks.push(CheckOutcome::flag("tree_shrinkage", check.shrinkage, "cantor_report.json:check.shrinkage"));
    o.checks.push(CheckOutcome::at_most("gap_closed_form", gap_err, 1e-12, "cantor_report.json:max_gap_closed_form_error"));
    o.checks.push(CheckOutcome::at_most("integral_depth_agreement", rel, 0.01, "cantor_report.json:relative_difference"));
    let report = CantorReport {
        cover: CoverSummary {
            delta: cover.delta,
            resolution_log2: cover.resolution_log2,
            candidate: cover.count(ArcStatus::Candidate),
            excluded: cover.count(ArcStatus::Excluded),
            unresolved: cover.count(ArcStatus::Unresolved),
            candidate_measure: cover.measure(ArcStatus::Candidate),
        },
        check,
        depth: tree.depth,
        compare_depth: cfg.cantor.compare_depth,
        alpha,
        integral: full.total_chordal,
        integral_compare: shallow.total_chordal,
        relative_difference: rel,
        max_gap_closed_form_error: gap_err,
        report: full,
    };
    write_json(out, "cantor_report.json", &report, &mut o.artifacts)?;
    Ok(o)
}

pub fn read_lambda_file(path: &Path) -> Result<Vec<BinaryAngle>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| BinaryAngle::from_hex(l).with_context(|| format!("bad angle {l:?}")))
        .collect()
}

fn identity_tolerance(r: &IdentityRecord, level: f64) -> f64 {
    match r.path {
        PathKind::Analytic => level + 1e-9,
        PathKind::Direct => (r.error_bar + 2.0 * level + 1e-9).min(5e-2),
    }
}

pub fn identities(cfg: &Config, inputs: &Inputs, out: &Path) -> Result<StageOutput> {
    let mut o = StageOutput::default();
    let series = cfg.series()?;
    let tree = load_tree(&inputs.tree)?;
    let lambdas = match &cfg.identities.lambdas {
        LambdaSpec::Count(n) => sample_lambdas(&tree.endpoints(), *n)?,
        LambdaSpec::File(p) => read_lambda_file(p)?,
    };
    if lambdas.is_empty() {
        bail!("no points to verify");
    }
    let cf = ConstructedFunctions::new(tree, series);
    let dc = DirectConfig {
        terms: cfg.identities.direct_terms,
        gauss: cfg.identities.direct_gauss,
        coarse_gauss: cfg.identities.direct_coarse_gauss,
        window_tolerance: cfg.identities.window_tolerance,
        ..DirectConfig::default()
    };
    let path = cfg.identities.path()?;
    let mut records = vec![];
    if path == PathSelection::Both {
        records.extend(verify_identity_m02(&cf, &lambdas, PathSelection::Analytic, &dc)?);
        let k = cfg.identities.direct_lambdas.min(lambdas.len());
        let direct: Vec<_> = (0..k).map(|j| lambdas[j * lambdas.len() / k]).collect();
        records.extend(verify_identity_m02(&cf, &direct, PathSelection::Direct, &dc)?);
    } else {
        records.extend(verify_identity_m02(&cf, &lambdas, path, &dc)?);
    }
    let mut w = create(out, "identities.csv", &mut o.artifacts)?;
    hypercyclic::eigenfield::write_identity_csv(&records, &mut w)?;
    w.flush()?;

    let level = cfg.cantor.delta + tail_bound(8.0, cfg.series.truncation);
    let mut w = csv_writer(create(out, "identities_checks.csv", &mut o.artifacts)?);
    w.write_record(["lambda_hex", "target", "path", "measured_re", "measured_im", "residual", "tolerance", "pass"])?;
    // per path, the row closest to (or furthest past) its tolerance
    let mut worst: [Option<(f64, f64)>; 2] = [None; 2];
    for r in &records {
        let tol = identity_tolerance(r, level);
        let i = (r.path == PathKind::Direct) as usize;
        if worst[i].is_none_or(|(res, t)| r.residual / tol > res / t) {
            worst[i] = Some((r.residual, tol));
        }
        w.write_record([
            r.lambda.to_hex(),
            r.identity.label().into(),
            if i == 0 { "analytic" } else { "direct" }.into(),
            format!("{:e}", r.measured.re),
            format!("{:e}", r.measured.im),
            format!("{:e}", r.residual),
            format!("{:e}", tol),
            (r.residual <= tol).to_string(),
        ])?;
    }
    w.flush()?;
    let src = "identities_checks.csv:residual";
    for (i, name) in ["analytic_residual", "direct_residual"].iter().enumerate() {
        if let Some((res, tol)) = worst[i] {
            o.checks.push(CheckOutcome::at_most(name, res, tol, src));
        }
    }
    Ok(o)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::Writer::from_writer(w)
}

fn model_lambdas(tree: &CantorTree, m: usize) -> Result<Vec<BinaryAngle>> {
    let e = tree.endpoints();
    Ok(if m.is_power_of_two() { sample_lambdas_nested(&e, m)? } else { sample_lambdas(&e, m)? })
}

pub fn model(cfg: &Config, inputs: &Inputs, out: &Path) -> Result<StageOutput> {
    let mut o = StageOutput::default();
    let cf = ConstructedFunctions::new(load_tree(&inputs.tree)?, cfg.series()?);
    let mc = model_config(cfg);
    let samples = Samples::graded(&cf, &mc)?;
    let lambdas = model_lambdas(&cf.tree, cfg.model.m)?;
    let md = build_model_on(&samples, &lambdas, Coupling::Forced, &mc)?;
    std::fs::write(out.join(MODEL), md.to_json()? + "\n")?;
    o.artifacts.push(MODEL.into());

    let trend = membership_trend(&samples, &lambdas, &cfg.model.trend, &mc)?;
    let mut w = csv_writer(create(out, "membership.csv", &mut o.artifacts)?);
    w.write_record(["m", "h_residual", "u_inv_h_residual", "h_norm", "u_inv_h_norm"])?;
    for r in &trend {
        w.write_record([
            r.m.to_string(),
            format!("{:e}", r.h_residual),
            format!("{:e}", r.u_inv_h_residual),
            format!("{:e}", r.h_norm),
            format!("{:e}", r.u_inv_h_norm),
        ])?;
    }
    w.flush()?;
    let rise = trend.windows(2).map(|p| (p[1].h_residual - p[0].h_residual) / p[0].h_residual).fold(f64::NEG_INFINITY, f64::max);
    if trend.len() > 1 {
        o.checks.push(CheckOutcome::at_most("membership_nonincreasing", rise, 1e-9, "membership.csv:h_residual"));
    }
    if let Some(r0) = trend.first() {
        o.checks.push(CheckOutcome::at_most(
            "u_inv_h_norm_equals_h_norm",
            (r0.u_inv_h_norm - r0.h_norm).abs() / r0.h_norm,
            1e-12,
            "membership.csv:u_inv_h_norm",
        ));
    }

    let rows = eigen_residual_rows(&md, &cf, &samples.grid, Execution::Parallel)?;
    let mut w = create(out, "eigen_residuals.csv", &mut o.artifacts)?;
    write_eigen_residual_csv(&rows, &mut w)?;
    w.flush()?;
    let lam: Vec<Complex64> = md.lambdas.iter().map(|l| l.to_complex()).collect();
    let spec = linalg::spectrum_distance(&linalg::eigenvalues(&md.t_mat), &lam);
    o.checks.push(CheckOutcome::at_most("spectrum_T", spec, 1e-8, "model.json:t_mat"));
    let field = rows.iter().map(|r| (r.field_measured - r.field_predicted).abs() / r.field_predicted).fold(0.0, f64::max);
    o.checks.push(CheckOutcome::at_most("field_eigen_vs_coupling", field, 1e-10, "eigen_residuals.csv:field_measured"));
    let shift = rows.iter().map(|r| r.model_shift).fold(0.0, f64::max);
    o.checks.push(CheckOutcome::at_most("model_shift", shift, 1e-8, "eigen_residuals.csv:model_shift"));
    Ok(o)
}

/// The `eigen-residuals` table alone.
pub fn eigen_residuals(cfg: &Config, inputs: &Inputs, out: &Path) -> Result<StageOutput> {
    let mut o = StageOutput::default();
    let cf = ConstructedFunctions::new(load_tree(&inputs.tree)?, cfg.series()?);
    let md = load_model(&inputs.model)?;
    let samples = Samples::graded(&cf, &model_config(cfg))?;
    let rows = eigen_residual_rows(&md, &cf, &samples.grid, Execution::Parallel)?;
    let mut w = create(out, "eigen_residuals.csv", &mut o.artifacts)?;
    write_eigen_residual_csv(&rows, &mut w)?;
    w.flush()?;
    let field = rows.iter().map(|r| (r.field_measured - r.field_predicted).abs() / r.field_predicted).fold(0.0, f64::max);
    o.checks.push(CheckOutcome::at_most("field_eigen_vs_coupling", field, 1e-10, "eigen_residuals.csv:field_measured"));
    Ok(o)
}

#[derive(Serialize)]
struct DecomposeFile {
    #[serde(flatten)]
    report: decomp::SplitReport,
    m: usize,
    checks: Vec<decomp::Check>,
}

pub fn decompose(cfg: &Config, inputs: &Inputs, out: &Path) -> Result<StageOutput> {
    let mut o = StageOutput::default();
    let md = load_model(&inputs.model)?;
    for method in cfg.decompose.methods()? {
        let s = decomp::split(&md, method)?;
        let checks = decomp::audit_checks(&s, &md);
        let tag = match method {
            Method::Te => "te",
            Method::Contraction => "contraction",
        };
        let name = format!("decompose_{tag}.json");
        for c in &checks {
            let mut oc = CheckOutcome::at_most(&format!("{tag}.{}", c.quantity), c.value, c.limit, &format!("{name}:checks"));
            oc.pass = c.pass;
            o.checks.push(oc);
        }
        write_json(out, &name, &DecomposeFile { report: s.report(), m: md.dim(), checks }, &mut o.artifacts)?;
    }
    Ok(o)
}

fn unitary_part(md: &GalerkinModel) -> Result<CMatrix> {
    Ok(decomp::te_split(md)?.v)
}

fn matrix_of(md: &GalerkinModel, which: &str) -> Result<CMatrix> {
    match which {
        "T" => Ok(md.t_mat.clone()),
        "V" => unitary_part(md),
        other => bail!("unknown matrix {other:?}, expected T or V"),
    }
}

/// Writes the orbit CSV of `which` for one seed and returns its statistics.
pub fn orbit_csv(md: &GalerkinModel, which: &str, steps: usize, eps: f64, seed: u64, stream: bool, w: impl Write) -> Result<orbit::OrbitRun> {
    let mat = matrix_of(md, which)?;
    let (x0, dirs) = orbit::seeded_setup(md.dim(), seed);
    if stream {
        return Ok(orbit::run_orbit_csv(&mat, &x0, steps, &dirs, eps, w)?);
    }
    let mut rows: Vec<(usize, f64, Vec<Complex64>)> = Vec::with_capacity(steps + 1);
    let run = orbit::run_orbit_streaming(&mat, &x0, steps, &dirs, eps, true, |r| {
        rows.push((r.step, r.log_norm, r.proj.to_vec()));
        Ok(())
    })?;
    let mut wr = csv_writer(w);
    let mut header = vec!["step".to_string(), "lognorm".to_string()];
    for k in 0..dirs.len() {
        header.push(format!("p{k}_re"));
        header.push(format!("p{k}_im"));
    }
    wr.write_record(&header)?;
    for (step, ln, proj) in rows {
        let mut rec = vec![step.to_string(), format!("{ln:e}")];
        for p in proj {
            rec.push(format!("{:e}", p.re));
            rec.push(format!("{:e}", p.im));
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(run)
}

#[derive(Serialize)]
struct OrbitSummary {
    m: usize,
    steps: usize,
    eps: f64,
    seeds: Vec<u64>,
    runs: Vec<(String, orbit::OrbitRun)>,
    unitary_drift: f64,
    weyl_coverage: f64,
    log_norm_variance_t: f64,
    log_norm_variance_v: f64,
    crowding: Vec<CrowdingRow>,
    crowding_low_budget: Vec<CrowdingRow>,
    low_budget_steps: usize,
    low_budget_eps: f64,
    projections_nondecreasing: usize,
    density_fractions: Vec<f64>,
    density: Vec<f64>,
}

fn nondecreasing_projections(rows: &[CrowdingRow]) -> usize {
    let nproj = rows.first().map_or(0, |r| r.coverage.len());
    (0..nproj).filter(|&k| rows.windows(2).all(|w| w[1].coverage[k] >= w[0].coverage[k])).count()
}

pub fn orbit_stage(cfg: &Config, inputs: &Inputs, out: &Path) -> Result<StageOutput> {
    let mut o = StageOutput::default();
    let md = load_model(&inputs.model)?;
    let oc = &cfg.orbit;
    let seeds = oc.seed_list(cfg.seed);
    let mut runs = vec![];
    for which in &oc.matrices {
        let name = format!("orbit_{which}.csv");
        let w = create(out, &name, &mut o.artifacts)?;
        let mut run = orbit_csv(&md, which, oc.steps, oc.eps, cfg.seed, oc.stream, w)?;
        run.log_norms.clear();
        runs.push((which.clone(), run));
    }

    let v = unitary_part(&md)?;
    let drift = Execution::Parallel
        .map_slice(&seeds, |&s| -> Result<f64> {
            let (x0, _) = orbit::seeded_setup(md.dim(), s);
            Ok(orbit::run_orbit(&v, &x0, oc.steps, &[], 1.0)?.max_norm_drift)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let lam = Complex64::from_polar(1.0, TAU * (2f64.sqrt() - 1.0));
    let one = CVector::from_element(1, Complex64::new(1.0, 0.0));
    let weyl = orbit::run_orbit(&CMatrix::from_element(1, 1, lam), &one, oc.weyl_steps, std::slice::from_ref(&one), oc.eps)?.coverage[0];
    let var = orbit::compare_log_norm_variance(&md.t_mat, &v, oc.steps, &seeds, Execution::Parallel)?;

    let subs: Vec<GalerkinModel> = oc.crowding.iter().filter(|&&k| k <= md.dim()).map(|&k| md.prefix(k)).collect::<std::result::Result<_, _>>()?;
    let crowding = orbit::eigen_crowding_report(&subs, oc.steps, oc.eps, &seeds, Execution::Parallel)?;
    let low = orbit::eigen_crowding_report(&subs, oc.low_budget_steps, oc.low_budget_eps, &seeds, Execution::Parallel)?;
    let mut w = csv_writer(create(out, "crowding.csv", &mut o.artifacts)?);
    w.write_record(["budget", "m", "condition", "min_separation", "coverage_p0", "coverage_p1", "coverage_p2", "log_norm_variance"])?;
    for (budget, rows) in [("fixed", &crowding), ("low", &low)] {
        for r in rows.iter() {
            let mut rec = vec![budget.to_string(), r.m.to_string(), format!("{:e}", r.condition), format!("{:e}", r.min_separation)];
            for k in 0..3 {
                rec.push(r.coverage.get(k).map_or(String::new(), |c| format!("{c}")));
            }
            rec.push(format!("{:e}", r.log_norm_variance));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;

    let fractions = vec![0.25, 0.5, 0.75, 1.0];
    let density = if md.dim() >= 4 { orbit::density_trend(&md, &fractions, cfg.seed)? } else { vec![] };
    let nondec = nondecreasing_projections(&crowding);

    let s = "orbit_summary.json";
    o.checks.push(CheckOutcome::at_most("unitary_norm_drift", drift, 1e-5, &format!("{s}:unitary_drift")).trend());
    o.checks.push(CheckOutcome::at_least("weyl_coverage", weyl, 0.95, &format!("{s}:weyl_coverage")).trend());
    if md.dim() >= 8 {
        let mut c = CheckOutcome::at_least("log_norm_variance_T_over_V", var.t, var.v, &format!("{s}:log_norm_variance_t"));
        c.pass = var.t > var.v;
        o.checks.push(c.trend());
    }
    if crowding.len() > 1 {
        o.checks.push(CheckOutcome::at_least("coverage_trend_projections", nondec as f64, 2.0, "crowding.csv:coverage_p*").trend());
    }
    let summary = OrbitSummary {
        m: md.dim(),
        steps: oc.steps,
        eps: oc.eps,
        seeds,
        runs,
        unitary_drift: drift,
        weyl_coverage: weyl,
        log_norm_variance_t: var.t,
        log_norm_variance_v: var.v,
        crowding,
        crowding_low_budget: low,
        low_budget_steps: oc.low_budget_steps,
        low_budget_eps: oc.low_budget_eps,
        projections_nondecreasing: nondec,
        density_fractions: fractions,
        density,
    };
    write_json(out, s, &summary, &mut o.artifacts)?;
    Ok(o)
}
