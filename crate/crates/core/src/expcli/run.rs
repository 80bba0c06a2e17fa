//! Experiment execution: instance expansion, per-instance pipelines and
//! output files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::generate::{derive_seed, generate, InstanceSpec};
use crate::bounds::{self, kn_ratio_study, lemma1_certificate, reconstruct_value_gap, KnStudy, LengthCertificate};
use crate::convex::argmin_with;
use crate::error::Result;
use crate::flow::{integrate_with, FlowTrajectory};
use crate::stability::{verify_with_trajectory, DeviationReport, VerifyOptions};
use crate::{ConvexFunction, Tolerances};

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: u64,
    pub tol_scale: f64,
    pub timestamp: bool,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>, seed: u64) -> Self {
        Self { out: out.into(), seed, tol_scale: 1.0, timestamp: false }
    }

    fn header(&self) -> Option<String> {
        self.timestamp.then(|| format!("# generated_unix={}", unix_now()))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Clone, Debug)]
enum Source {
    Explicit(usize),
    Generated(InstanceSpec),
}

/// An instance before generation.
#[derive(Clone, Debug)]
pub struct Planned {
    pub id: usize,
    pub label: String,
    pub sweep: Option<usize>,
    pub epsilon: Option<f64>,
    pub n: usize,
    source: Source,
}

#[derive(Clone, Debug)]
pub struct Instance {
    pub id: usize,
    pub f: ConvexFunction,
    pub g: ConvexFunction,
    pub x: DVector<f64>,
    pub radius: Option<f64>,
    pub rejections: usize,
}

/// Explicit instances first, then each sweep over `dims x epsilons x count`.
pub fn plan(cfg: &ExperimentConfig, seed: u64) -> Vec<Planned> {
    let mut out = Vec::new();
    for (i, inst) in cfg.instances.iter().enumerate() {
        out.push(Planned {
            id: out.len(),
            label: inst.name.clone().unwrap_or_else(|| format!("instance{i}")),
            sweep: None,
            epsilon: None,
            n: inst.f.dim(),
            source: Source::Explicit(i),
        });
    }
    for (si, sweep) in cfg.sweeps.iter().enumerate() {
        let dims = if sweep.dims.is_empty() { vec![sweep.spec.n] } else { sweep.dims.clone() };
        let eps: Vec<Option<f64>> =
            if sweep.epsilons.is_empty() { vec![None] } else { sweep.epsilons.iter().copied().map(Some).collect() };
        for &n in &dims {
            for &e in &eps {
                for rep in 0..sweep.count {
                    let mut spec = sweep.spec.clone();
                    spec.n = n;
                    if let Some(e) = e {
                        spec.epsilon = e;
                    }
                    let sweep_seed = derive_seed(seed ^ spec.seed, si as u64, n as u64);
                    spec.seed = derive_seed(sweep_seed, rep as u64, 0x5eed);
                    out.push(Planned {
                        id: out.len(),
                        label: sweep.name.clone(),
                        sweep: Some(si),
                        epsilon: Some(spec.epsilon),
                        n,
                        source: Source::Generated(spec),
                    });
                }
            }
        }
    }
    out
}

impl Planned {
    pub fn materialize(&self, cfg: &ExperimentConfig) -> Result<Instance> {
        match &self.source {
            Source::Explicit(i) => {
                let e = &cfg.instances[*i];
                Ok(Instance {
                    id: self.id,
                    f: e.f.clone(),
                    g: e.g.clone().unwrap_or_else(|| e.f.clone()),
                    x: DVector::from_column_slice(&e.x),
                    radius: e.radius,
                    rejections: 0,
                })
            }
            Source::Generated(spec) => {
                let g = generate(spec)?;
                Ok(Instance { id: self.id, f: g.f, g: g.g, x: g.x, radius: None, rejections: g.rejections })
            }
        }
    }
}

fn tolerances(cfg: &ExperimentConfig, opts: &RunOptions) -> Tolerances {
    cfg.tolerances.scaled(opts.tol_scale)
}

/// Everything computed for one instance.
#[derive(Clone, Debug)]
pub struct InstanceOutcome {
    pub id: usize,
    pub n: usize,
    pub sweep: Option<usize>,
    pub epsilon: Option<f64>,
    pub report: DeviationReport,
    pub certificate: LengthCertificate,
    pub reconstruction_rel_err: f64,
    pub complete: bool,
    pub rejections: usize,
}

fn tube_radius(inst: &Instance, cfg: &ExperimentConfig, tol: &Tolerances) -> Result<f64> {
    if let Some(r) = inst.radius {
        return Ok(r);
    }
    let d = argmin_with(&inst.f, tol)?.distance(&inst.x)?;
    Ok(if d > 0.0 { cfg.radius_factor * d } else { cfg.radius_factor })
}

fn length_certificate(inst: &Instance, traj: &FlowTrajectory, cfg: &ExperimentConfig) -> Result<LengthCertificate> {
    let delta = (cfg.certificate_delta_fraction * traj.slopes[0]).max(1e-12);
    lemma1_certificate(&inst.f, traj, delta)
}

fn relative_error(value: f64, target: f64) -> f64 {
    if target == 0.0 {
        value.abs()
    } else {
        (value - target).abs() / target.abs()
    }
}

pub fn run_instance(inst: &Instance, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<InstanceOutcome> {
    let tol = tolerances(cfg, opts);
    let vopts =
        VerifyOptions { flow: cfg.flow.clone(), tube_samples: cfg.tube_samples, kn_constant: cfg.kn_constant, tol };
    let r = tube_radius(inst, cfg, &tol)?;
    let (report, traj) = verify_with_trajectory(&inst.f, &inst.g, &inst.x, r, &vopts)?;
    let certificate = length_certificate(inst, &traj, cfg)?;
    let rec = reconstruct_value_gap(&inst.f, &traj)?;
    Ok(InstanceOutcome {
        id: inst.id,
        n: inst.f.dim(),
        sweep: None,
        epsilon: None,
        reconstruction_rel_err: relative_error(rec.integral, report.gap_x),
        complete: traj.termination.is_complete(),
        report,
        certificate,
        rejections: inst.rejections,
    })
}

fn run_planned(p: &Planned, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<InstanceOutcome> {
    let inst = p.materialize(cfg)?;
    let mut out = run_instance(&inst, cfg, opts)?;
    out.sweep = p.sweep;
    out.epsilon = p.epsilon;
    Ok(out)
}

/// Write rows as CSV, optionally preceded by a comment line.
pub fn write_csv<T: Serialize>(path: &Path, header: Option<&str>, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    if let Some(h) = header {
        writeln!(file, "{h}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorRow {
    pub instance_id: usize,
    pub label: String,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct KStats {
    pub count: usize,
    pub max_ratio: f64,
    pub order_bound: f64,
    pub within_bound: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_unix: Option<u64>,
    pub instances: usize,
    pub errors: usize,
    pub certified: usize,
    pub certificate_failures: usize,
    pub equality_cases: usize,
    pub generator_rejections: usize,
    pub lemma1_passed: usize,
    pub lemma1_failed: usize,
    pub cv1_passed: usize,
    pub cv1_failed: usize,
    pub min_margin: f64,
    pub max_margin: f64,
    /// Largest `|min_grid ad1 - rhs_main| / rhs_main`.
    pub max_ad1_rel_gap: f64,
    pub max_reconstruction_rel_err: f64,
    pub incomplete_flows: usize,
    /// Per dimension, from complete flows.
    pub empirical_k: BTreeMap<usize, KStats>,
}

impl Summary {
    pub fn failures(&self) -> usize {
        self.errors + self.certificate_failures + self.lemma1_failed + self.cv1_failed
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PlotRow {
    pub sweep: String,
    pub epsilon: f64,
    pub instances: usize,
    pub slope_dev: f64,
    pub lhs_sup_sampled: f64,
    pub rhs_main: f64,
}

pub struct SweepResult {
    pub outcomes: Vec<InstanceOutcome>,
    pub errors: Vec<ErrorRow>,
    pub summary: Summary,
    pub plot: Vec<PlotRow>,
}

/// Relative gap between the `ad1` grid minimum and `rhs_main`.
pub fn ad1_rel_gap(r: &DeviationReport) -> f64 {
    let gap = (r.rhs_ad1_min - r.rhs_main).abs();
    if r.delta_star > 0.0 {
        gap / r.rhs_main.abs().max(f64::MIN_POSITIVE)
    } else {
        // Degenerate grid: only an absolute comparison is meaningful.
        if gap <= 1e-9 * r.scale {
            0.0
        } else {
            gap / r.rhs_main.abs().max(1e-300)
        }
    }
}

/// Run every planned instance (in parallel on the current rayon pool) and
/// assemble the summary. Empirical length constants are filled in after all
/// flows are known.
pub fn sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> SweepResult {
    let planned = plan(cfg, opts.seed);
    let results: Vec<Result<InstanceOutcome>> = planned.par_iter().map(|p| run_planned(p, cfg, opts)).collect();
    let mut outcomes = Vec::new();
    let mut errors = Vec::new();
    for (p, r) in planned.iter().zip(results) {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => errors.push(ErrorRow { instance_id: p.id, label: p.label.clone(), message: e.to_string() }),
        }
    }

    let mut empirical_k: BTreeMap<usize, KStats> = BTreeMap::new();
    for o in outcomes.iter().filter(|o| o.complete) {
        let e = empirical_k.entry(o.n).or_insert(KStats {
            count: 0,
            max_ratio: 1.0,
            order_bound: bounds::kn_order(o.n),
            within_bound: true,
        });
        e.count += 1;
        e.max_ratio = e.max_ratio.max(o.report.kn_ratio);
        e.within_bound = bounds::within_order_bound(e.max_ratio, o.n);
    }
    let mut cv1_passed = 0;
    let mut cv1_failed = 0;
    for o in &mut outcomes {
        let k = cfg.kn_constant.or_else(|| empirical_k.get(&o.n).map(|s| s.max_ratio)).unwrap_or(1.0);
        let rhs = o.report.terms().cv1(k);
        o.report.rhs_cv1 = Some(rhs);
        if o.report.lhs <= rhs + o.report.slack() {
            cv1_passed += 1;
        } else {
            cv1_failed += 1;
        }
    }

    let summary = Summary {
        generated_unix: opts.timestamp.then(unix_now),
        instances: planned.len(),
        errors: errors.len(),
        certified: outcomes.iter().filter(|o| o.report.passed).count(),
        certificate_failures: outcomes.iter().filter(|o| !o.report.passed).count(),
        equality_cases: outcomes.iter().filter(|o| o.report.equality).count(),
        generator_rejections: outcomes.iter().map(|o| o.rejections).sum(),
        lemma1_passed: outcomes.iter().filter(|o| o.certificate.passed).count(),
        lemma1_failed: outcomes.iter().filter(|o| !o.certificate.passed).count(),
        cv1_passed,
        cv1_failed,
        min_margin: outcomes.iter().map(|o| o.report.margin).fold(f64::INFINITY, f64::min),
        max_margin: outcomes.iter().map(|o| o.report.margin).fold(f64::NEG_INFINITY, f64::max),
        max_ad1_rel_gap: outcomes.iter().map(|o| ad1_rel_gap(&o.report)).fold(0.0, f64::max),
        max_reconstruction_rel_err: outcomes
            .iter()
            .filter(|o| o.complete)
            .map(|o| o.reconstruction_rel_err)
            .fold(0.0, f64::max),
        incomplete_flows: outcomes.iter().filter(|o| !o.complete).count(),
        empirical_k,
    };

    let mut plot = Vec::new();
    for (si, sw) in cfg.sweeps.iter().enumerate() {
        for &eps in &sw.epsilons {
            let group: Vec<&InstanceOutcome> =
                outcomes.iter().filter(|o| o.sweep == Some(si) && o.epsilon == Some(eps)).collect();
            if group.is_empty() {
                continue;
            }
            let max = |f: &dyn Fn(&InstanceOutcome) -> f64| group.iter().map(|o| f(o)).fold(0.0, f64::max);
            plot.push(PlotRow {
                sweep: sw.name.clone(),
                epsilon: eps,
                instances: group.len(),
                slope_dev: max(&|o| o.report.slope_dev_traj),
                lhs_sup_sampled: max(&|o| o.report.lhs),
                rhs_main: max(&|o| o.report.rhs_main),
            });
        }
    }
    SweepResult { outcomes, errors, summary, plot }
}

/// Write the sweep artifacts into `opts.out`.
pub fn write_sweep(res: &SweepResult, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<()> {
    std::fs::create_dir_all(&opts.out)?;
    let header = opts.header();
    let h = header.as_deref();
    let o = &cfg.outputs;
    write_csv(&opts.path(&o.reports), h, res.outcomes.iter().map(|x| x.report.row(x.id)))?;
    write_csv(&opts.path(&o.certificates), h, res.outcomes.iter().map(|x| x.certificate.row(x.id, x.n)))?;
    write_csv(&opts.path(&o.plot), h, res.plot.iter())?;
    write_csv(&opts.path(&o.errors), h, res.errors.iter())?;
    let mut f = BufWriter::new(File::create(opts.path(&o.summary))?);
    serde_json::to_writer_pretty(&mut f, &res.summary)?;
    writeln!(f)?;
    Ok(())
}

/// One instance's trajectory and certificate.
pub fn flow_one(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    index: usize,
) -> Result<(FlowTrajectory, LengthCertificate)> {
    let inst = pick(cfg, opts, index)?;
    let tol = tolerances(cfg, opts);
    let am = argmin_with(&inst.f, &tol)?;
    let traj = integrate_with(&inst.f, &am, &inst.x, &cfg.flow, &tol)?;
    let cert = length_certificate(&inst, &traj, cfg)?;
    std::fs::create_dir_all(&opts.out)?;
    traj.write_jsonl(BufWriter::new(File::create(opts.path("trajectory.jsonl"))?))?;
    write_csv(&opts.path(&cfg.outputs.certificates), opts.header().as_deref(), [cert.row(inst.id, inst.f.dim())])?;
    Ok((traj, cert))
}

fn pick(cfg: &ExperimentConfig, opts: &RunOptions, index: usize) -> Result<Instance> {
    let planned = plan(cfg, opts.seed);
    let p = planned.get(index).ok_or_else(|| {
        crate::Error::InvalidArgument(format!("instance {index} out of range; config defines {}", planned.len()))
    })?;
    p.materialize(cfg)
}

/// Full report for one instance, written as JSON.
pub fn verify_one(cfg: &ExperimentConfig, opts: &RunOptions, index: usize) -> Result<InstanceOutcome> {
    let inst = pick(cfg, opts, index)?;
    let out = run_instance(&inst, cfg, opts)?;
    std::fs::create_dir_all(&opts.out)?;
    let mut f = BufWriter::new(File::create(opts.path("report.json"))?);
    serde_json::to_writer_pretty(&mut f, &out.report)?;
    writeln!(f)?;
    write_csv(&opts.path(&cfg.outputs.reports), opts.header().as_deref(), [out.report.row(inst.id)])?;
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct ReconstructRow {
    pub instance_id: usize,
    pub n: usize,
    pub gap: f64,
    pub integral: f64,
    pub lower: f64,
    pub upper: f64,
    pub rel_err: f64,
    pub complete: bool,
    pub remaining_gap_bound: f64,
}

pub fn reconstruct_all(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<ReconstructRow>> {
    let tol = tolerances(cfg, opts);
    let planned = plan(cfg, opts.seed);
    let rows = planned
        .par_iter()
        .map(|p| {
            let inst = p.materialize(cfg)?;
            let am = argmin_with(&inst.f, &tol)?;
            let traj = integrate_with(&inst.f, &am, &inst.x, &cfg.flow, &tol)?;
            let rec = reconstruct_value_gap(&inst.f, &traj)?;
            let gap = inst.f.eval(&inst.x)? - am.min_value;
            Ok(ReconstructRow {
                instance_id: p.id,
                n: p.n,
                gap,
                integral: rec.integral,
                lower: rec.lower,
                upper: rec.upper,
                rel_err: relative_error(rec.integral, gap),
                complete: rec.complete,
                remaining_gap_bound: rec.remaining_gap_bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(&opts.out)?;
    write_csv(&opts.path("reconstruct.csv"), opts.header().as_deref(), rows.iter())?;
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct KnRow {
    pub instance_id: usize,
    pub n: usize,
    pub kn_ratio: f64,
    pub complete: bool,
}

/// Length ratios per dimension. With `n_override`, every sweep runs in that
/// dimension only and explicit instances of other dimensions are skipped.
pub fn knstudy(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    n_override: Option<usize>,
) -> Result<(Vec<KnRow>, BTreeMap<usize, KnStudy>)> {
    let mut cfg = cfg.clone();
    if let Some(n) = n_override {
        cfg.instances.retain(|i| i.f.dim() == n);
        for s in &mut cfg.sweeps {
            s.spec.n = n;
            s.dims = vec![n];
        }
    }
    let tol = tolerances(&cfg, opts);
    let planned = plan(&cfg, opts.seed);
    let trajs = planned
        .par_iter()
        .map(|p| {
            let inst = p.materialize(&cfg)?;
            let am = argmin_with(&inst.f, &tol)?;
            integrate_with(&inst.f, &am, &inst.x, &cfg.flow, &tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<KnRow> = planned
        .iter()
        .zip(&trajs)
        .map(|(p, t)| KnRow {
            instance_id: p.id,
            n: p.n,
            kn_ratio: bounds::kn_ratio(t),
            complete: t.termination.is_complete(),
        })
        .collect();
    let mut by_n: BTreeMap<usize, Vec<FlowTrajectory>> = BTreeMap::new();
    for (p, t) in planned.iter().zip(trajs) {
        by_n.entry(p.n).or_default().push(t);
    }
    let studies: BTreeMap<usize, KnStudy> = by_n.iter().map(|(&n, ts)| (n, kn_ratio_study(ts, n))).collect();
    std::fs::create_dir_all(&opts.out)?;
    write_csv(&opts.path("knstudy.csv"), opts.header().as_deref(), rows.iter())?;
    let mut f = BufWriter::new(File::create(opts.path("knstudy.json"))?);
    serde_json::to_writer_pretty(&mut f, &studies)?;
    writeln!(f)?;
    Ok((rows, studies))
}
