//! Runs every configured check on one space and form, and evaluates the
//! implications that must hold between their verdicts.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{CheckConfig, ExperimentConfig, Expectation};
use crate::envelopes::{
    chain_lower_check, check_pc_equivalence, default_times, diag_checks, dominance_map, fit_hk,
    tail_probability_check, DominanceMap, EnvelopeOptions, EnvelopeParams, HkMode, TailOptions,
};
use crate::error::{Error, Result};
use crate::form::{DirichletForm, HeatKernelTable, JumpKernel};
use crate::functionals::{
    check_cs, check_exit, check_fk, check_gcap, check_jump_two_sided, check_pi, tail_and_ujs, BallFamily,
    JumpFitOptions, TestFunctions,
};
use crate::harnack::{check_phi, check_regularity, CylinderResult, CylinderSpec, PhiMode, PhiOptions, RegularityOptions};
use crate::report::{CheckResult, ConditionReport, RatioTable, Verdict};
use crate::scales::ScaleTriple;
use crate::space::{chain_check, MetricMeasureSpace};

/// Command-line overrides applied on top of the configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub threads: Option<usize>,
    pub grid_thin: Option<usize>,
    pub mode: Option<PhiMode>,
    /// Run only the check with this key.
    pub only: Option<String>,
}

/// Space, form and scales built once per configuration; the heat kernel on the
/// time grid is computed on first use and shared by every check.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scales: ScaleTriple,
    pub form: DirichletForm,
    pub family: BallFamily,
    pub times: Vec<f64>,
    pub warnings: Vec<String>,
    kernel: OnceLock<Result<HeatKernelTable>>,
}

impl Experiment {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let mut warnings = config.validate()?;
        let (scales, _) = config.scale_triple()?;
        let space = Arc::new(MetricMeasureSpace::build(config.space.kind, &config.space.params)?);
        let jump = JumpKernel::build(&space, &config.jump)?;
        let form = DirichletForm::assemble(space.clone(), config.form.local_scale, jump)?;
        let mut family = BallFamily::default_for(&space, config.grids.centers);
        if let Some(r) = &config.grids.radii {
            family = family.with_radii(r);
        }
        if family.radii.is_empty() {
            warnings.push("no interior radii fit the default ball family".into());
        }
        let times = match &config.grids.time_values {
            Some(t) => t.clone(),
            None => default_times(&scales, &space, config.grids.times),
        };
        Ok(Experiment { config: config.clone(), scales, form, family, times, warnings, kernel: OnceLock::new() })
    }

    pub fn space(&self) -> &MetricMeasureSpace {
        self.form.space()
    }

    pub fn kernel(&self) -> Result<&HeatKernelTable> {
        self.kernel.get_or_init(|| self.form.heat_kernel(&self.times, None)).as_ref().map_err(Clone::clone)
    }

    /// Kernel if it was computed, without computing it.
    pub fn kernel_if_ready(&self) -> Option<&HeatKernelTable> {
        self.kernel.get().and_then(|r| r.as_ref().ok())
    }

    fn family_for(&self, check: &CheckConfig) -> BallFamily {
        let mut f = self.family.clone();
        if let Some(r) = &check.params.radii {
            f.radii = r.clone();
        }
        if let Some(c) = &check.params.centers {
            f.centers = c.clone();
        }
        f
    }
}

/// Extra data a check produces for rendering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "data")]
pub enum Artifact {
    Dominance(DominanceMap),
    Cylinders(Vec<CylinderResult>),
    Envelope(EnvelopeParams),
}

pub struct CheckOutput {
    pub result: CheckResult,
    pub artifact: Option<Artifact>,
}

impl CheckOutput {
    fn plain(result: CheckResult) -> Self {
        CheckOutput { result, artifact: None }
    }
}

fn report_only(report: ConditionReport) -> CheckOutput {
    CheckOutput::plain(CheckResult::new(report, RatioTable::default()))
}

fn finite_verdict(v: f64) -> Verdict {
    if v.is_finite() {
        Verdict::Certified
    } else {
        Verdict::Failed
    }
}

/// Runs one check; errors are returned, not converted.
pub fn run_check(exp: &Experiment, check: &CheckConfig, opts: &SuiteOptions) -> Result<CheckOutput> {
    let form = &exp.form;
    let scales = &exp.scales;
    let space = exp.space();
    let p = &check.params;
    let fam = exp.family_for(check);
    let center = fam.centers.first().copied().unwrap_or_else(|| space.center());
    let envelope_opts = || {
        let mut o = EnvelopeOptions::default();
        if let Some(v) = p.upper_dilation {
            o.upper_dilation = v;
        }
        if let Some(v) = p.lower_dilation {
            o.lower_dilation = v;
        }
        if let Some(v) = p.c1 {
            o.hk_minus_radius = v;
        }
        o.max_speed = p.max_speed;
        o.jump_term = !form.jump().is_zero();
        o.thin = opts.grid_thin.unwrap_or(exp.config.grids.thin);
        o
    };
    let out = match check.kind.as_str() {
        "volume" => {
            let v = space.volume_report()?;
            let ok = v.c_doubling.is_finite() && v.rvd_holds_on_range;
            report_only(
                ConditionReport::new("VD_RVD", if ok { Verdict::Certified } else { Verdict::Failed })
                    .constant("c_doubling", v.c_doubling)
                    .constant("l_mu", v.l_mu)
                    .constant("c_mu", v.c_mu)
                    .constant("d1", v.d1)
                    .constant("d2", v.d2)
                    .constant("c_low", v.c_low)
                    .constant("c_high", v.c_high)
                    .range("r", v.radius_range.0, v.radius_range.1)
                    .witness("x", v.doubling_witness.0)
                    .witness("r", v.doubling_witness.1),
            )
        }
        "chain" => {
            let c = chain_check(space, 64, exp.config.seed);
            let mut r = ConditionReport::new("chain", finite_verdict(c.constant))
                .constant("C", c.constant)
                .witness("samples", c.samples);
            if let Some((x, y, n)) = c.witness {
                r = r.witness("x", x).witness("y", y).witness("n", n);
            }
            report_only(r)
        }
        "fk" => CheckOutput::plain(check_fk(form, scales, &fam)?),
        "pi" => CheckOutput::plain(check_pi(form, scales, &fam)?),
        "gcap" => CheckOutput::plain(check_gcap(form, scales, &fam)?),
        "cs" => CheckOutput::plain(check_cs(form, scales, &fam, p.c0.unwrap_or(1.0), p.c1.unwrap_or(0.125))?),
        "exit" => CheckOutput::plain(check_exit(form, scales, &fam)?.0),
        "exit_probability" => CheckOutput::plain(check_exit(form, scales, &fam)?.1),
        "jump" => {
            let psi = p.psi.clone().unwrap_or_else(|| scales.phi_j().clone());
            let mut o = JumpFitOptions { reference_range: p.reference_range, ..Default::default() };
            if let Some(v) = p.violation_threshold {
                o.violation_threshold = v;
            }
            CheckOutput::plain(check_jump_two_sided(form, &psi, &fam, &o)?)
        }
        "jump_tail" => CheckOutput::plain(tail_and_ujs(form, scales, &fam)?.0),
        "ujs" => CheckOutput::plain(tail_and_ujs(form, scales, &fam)?.1),
        "pc_equivalence" => CheckOutput::plain(check_pc_equivalence(
            scales,
            p.decades.unwrap_or(6.0),
            p.points_per_axis.unwrap_or(64),
        )?),
        "hk" | "hk_minus" | "uhk" | "uhk_weak" => {
            let mode = match check.kind.as_str() {
                "hk" => HkMode::Hk,
                "hk_minus" => HkMode::HkMinus,
                "uhk" => HkMode::Uhk,
                _ => HkMode::UhkWeak,
            };
            let (params, result) = fit_hk(exp.kernel()?, scales, space, mode, &envelope_opts())?;
            CheckOutput { result, artifact: Some(Artifact::Envelope(params)) }
        }
        "uhkd" | "nl" | "ndl" => {
            let idx = ["uhkd", "nl", "ndl"].iter().position(|k| *k == check.kind).unwrap();
            let mut all = diag_checks(form, exp.kernel()?, scales, &fam.centers, &fam.radii, p.epsilon.unwrap_or(0.25))?;
            CheckOutput::plain(all.swap_remove(idx))
        }
        "dominance" => {
            let t = p.t.unwrap_or_else(|| scales.phi().value(8.0 * space.spacing()));
            let k = form.heat_kernel(&[t], None)?;
            let map = dominance_map(Some((&k, 0)), scales, space, t, center, p.dilation.unwrap_or(1.0))?;
            let mut table = RatioTable::new(&["y", "d", "region"]);
            for y in 0..map.n {
                table.push(vec![y as f64, space.d(center, y), map.labels[center * map.n + y] as u8 as f64]);
            }
            CheckOutput { result: CheckResult::new(map.report(), table), artifact: Some(Artifact::Dominance(map)) }
        }
        "tail_probability" => {
            let mut o = TailOptions { max_speed: p.max_speed, ..Default::default() };
            if let Some(a) = p.a1 {
                o.a1 = a;
            }
            CheckOutput::plain(tail_probability_check(exp.kernel()?, scales, space, &fam.radii, &o)?)
        }
        "chain_lower" => {
            let (lo, hi) = p.ratio_range.unwrap_or((2.0, 8.0));
            CheckOutput::plain(chain_lower_check(exp.kernel()?, scales, space, lo, hi, p.max_speed)?)
        }
        "phi" => {
            let consts = exp.config.harnack_constants(check);
            let explicit = p.radii.is_some();
            let centers = p.centers.clone().unwrap_or_else(|| vec![space.center()]);
            let mut cylinders = Vec::new();
            for &x0 in &centers {
                for &r in &fam.radii {
                    let cyl = CylinderSpec { t0: 0.0, x0, r, c: consts };
                    match cyl.validate(space) {
                        Ok(()) => cylinders.push(cyl),
                        Err(e) if explicit => return Err(e),
                        Err(_) => {}
                    }
                }
            }
            if cylinders.is_empty() {
                return Err(Error::Domain("no cylinder fits inside the space".into()));
            }
            let mode = opts.mode.or(p.mode).unwrap_or(PhiMode::Necessary);
            let po = PhiOptions { mode, ..Default::default() };
            let (cyl, result) = check_phi(form, scales, &cylinders, &po)?;
            CheckOutput { result, artifact: Some(Artifact::Cylinders(cyl)) }
        }
        "phr" | "ehr" => {
            let mut o = RegularityOptions { include_parabolic: check.kind == "phr", ..Default::default() };
            if let Some(e) = p.epsilon {
                o.epsilon = e;
            }
            let centers = p.centers.clone().unwrap_or_else(|| vec![space.center()]);
            let (phr, ehr) = check_regularity(form, scales, &centers, &fam.radii, &o)?;
            CheckOutput::plain(if check.kind == "phr" { phr } else { ehr })
        }
        "gap" | "meyer" => {
            let rho = p.rho.unwrap_or_else(|| fam.radii.get(fam.radii.len() / 2).copied().unwrap_or(4.0 * space.spacing()));
            if check.kind == "gap" {
                let fns = TestFunctions::new(form)?.at(space, center, rho);
                let g = form.gap_check(rho, scales.phi().value(rho), &fns)?;
                report_only(ConditionReport::new("gap", finite_verdict(g.c0)).constant("c0", g.c0).constant("rho", rho))
            } else {
                let m = form.meyer_check(scales, rho, &exp.times, &fam.centers)?;
                let mut r = ConditionReport::new("meyer", finite_verdict(m.c1)).constant("c1", m.c1).constant("rho", rho);
                if let Some((t, x, y)) = m.witness {
                    r = r.witness("t", t).witness("x", x).witness("y", y);
                }
                report_only(r)
            }
        }
        other => return Err(Error::Config(format!("unknown check '{other}'"))),
    };
    Ok(out)
}

/// Runs a check, converting errors and panics into an `Errored` report.
pub fn run_check_caught(exp: &Experiment, check: &CheckConfig, opts: &SuiteOptions) -> CheckOutput {
    match catch_unwind(AssertUnwindSafe(|| run_check(exp, check, opts))) {
        Ok(Ok(out)) => out,
        Ok(Err(e)) => report_only(ConditionReport::errored(check.kind.clone(), e.to_string())),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "check panicked".into());
            report_only(ConditionReport::errored(check.kind.clone(), format!("panic: {msg}")))
        }
    }
}

pub fn matches_expectation(expect: Expectation, verdict: Verdict) -> bool {
    match expect {
        Expectation::Certified => verdict.passes(),
        Expectation::Failed => verdict == Verdict::Failed,
        Expectation::Any => verdict != Verdict::Errored,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub key: String,
    pub kind: String,
    pub expect: Expectation,
    pub matched: bool,
    pub report: ConditionReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImplicationStatus {
    /// Antecedent certified and every evaluated consequent certified.
    Holds,
    /// Antecedent certified and some consequent not certified.
    Deviation,
    /// Antecedent evaluated but not certified.
    Vacuous,
    NotEvaluated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindStatus {
    Certified,
    Failed,
    Errored,
    Absent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Implication {
    pub antecedent: String,
    pub consequents: BTreeMap<String, KindStatus>,
    pub status: ImplicationStatus,
}

/// Pairs reported for information; neither outcome is a deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub name: String,
    pub observed: Option<bool>,
}

/// Implications between check kinds; each antecedent forces its consequents.
pub const IMPLICATIONS: &[(&str, &[&str])] = &[
    ("hk_minus", &["phi", "jump", "pi", "gcap", "ndl", "uhkd"]),
    ("hk", &["uhk_weak"]),
    ("uhk", &["uhk_weak"]),
    ("ndl", &["nl"]),
];

/// Status of a kind from the checks that are not expected to fail.
fn kind_status(entries: &[CheckEntry], kind: &str) -> KindStatus {
    let relevant: Vec<&CheckEntry> =
        entries.iter().filter(|e| e.kind == kind && e.expect != Expectation::Failed).collect();
    if relevant.is_empty() {
        KindStatus::Absent
    } else if relevant.iter().any(|e| e.report.verdict == Verdict::Errored) {
        KindStatus::Errored
    } else if relevant.iter().all(|e| e.report.verdict.passes()) {
        KindStatus::Certified
    } else {
        KindStatus::Failed
    }
}

pub fn evaluate_implications(entries: &[CheckEntry]) -> Vec<Implication> {
    IMPLICATIONS
        .iter()
        .map(|(ante, cons)| {
            let a = kind_status(entries, ante);
            let consequents: BTreeMap<String, KindStatus> =
                cons.iter().map(|c| (c.to_string(), kind_status(entries, c))).collect();
            let status = match a {
                KindStatus::Absent | KindStatus::Errored => ImplicationStatus::NotEvaluated,
                KindStatus::Failed => ImplicationStatus::Vacuous,
                KindStatus::Certified => {
                    if consequents.values().any(|s| matches!(s, KindStatus::Failed | KindStatus::Errored)) {
                        ImplicationStatus::Deviation
                    } else {
                        ImplicationStatus::Holds
                    }
                }
            };
            Implication { antecedent: ante.to_string(), consequents, status }
        })
        .collect()
}

/// Harnack inequality certified while some jump fit fails.
pub fn evaluate_observations(entries: &[CheckEntry]) -> Vec<Observation> {
    let phi: Vec<_> = entries.iter().filter(|e| e.kind == "phi").collect();
    let jump: Vec<_> = entries.iter().filter(|e| e.kind == "jump").collect();
    let observed = if phi.is_empty() || jump.is_empty() {
        None
    } else {
        Some(
            phi.iter().any(|e| e.report.verdict.passes())
                && jump.iter().any(|e| e.report.verdict == Verdict::Failed),
        )
    };
    vec![Observation { name: "phi_without_jump_fit".into(), observed }]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timestamp {
    pub started_unix: u64,
    pub wall_seconds: f64,
    /// Wall time per check key, in configuration order.
    pub check_seconds: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub version: String,
    pub timestamp: Timestamp,
    pub options: SuiteOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub points: usize,
    pub checks: Vec<CheckEntry>,
    pub implications: Vec<Implication>,
    pub observations: Vec<Observation>,
    pub deviations: Vec<String>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

impl SuiteReport {
    /// 3 if a check errored, 2 if a verdict or implication deviates, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.checks.iter().any(|c| c.report.verdict == Verdict::Errored) {
            3
        } else if !self.deviations.is_empty() {
            2
        } else {
            0
        }
    }

    pub fn entry(&self, key: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.key == key)
    }
}

pub struct NamedOutput {
    pub key: String,
    pub table: RatioTable,
    pub artifact: Option<Artifact>,
}

pub struct SuiteRun {
    pub report: SuiteReport,
    pub outputs: Vec<NamedOutput>,
    pub experiment: Experiment,
}

pub fn run_suite(config: &ExperimentConfig, opts: &SuiteOptions) -> Result<SuiteRun> {
    match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?
            .install(|| run_suite_inner(config, opts)),
        None => run_suite_inner(config, opts),
    }
}

fn run_suite_inner(config: &ExperimentConfig, opts: &SuiteOptions) -> Result<SuiteRun> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    if let Some(t) = opts.grid_thin {
        if t == 0 {
            return Err(Error::Config("grid thinning must be positive".into()));
        }
    }
    let checks: Vec<&CheckConfig> = match &opts.only {
        Some(k) => {
            let found: Vec<_> = config.checks.iter().filter(|c| c.key() == k).collect();
            if found.is_empty() {
                return Err(Error::Config(format!("no check '{k}' in the configuration")));
            }
            found
        }
        None => config.checks.iter().collect(),
    };
    let exp = Experiment::build(config)?;
    let results: Vec<(CheckOutput, f64)> = checks
        .par_iter()
        .map(|c| {
            let t0 = Instant::now();
            let out = run_check_caught(&exp, c, opts);
            (out, t0.elapsed().as_secs_f64())
        })
        .collect();
    let mut entries = Vec::with_capacity(checks.len());
    let mut outputs = Vec::with_capacity(checks.len());
    let mut deviations = Vec::new();
    let mut check_seconds = Vec::with_capacity(checks.len());
    for (c, (out, seconds)) in checks.iter().zip(results) {
        check_seconds.push((c.key().to_string(), seconds));
        let verdict = out.result.report.verdict;
        let matched = matches_expectation(c.expect, verdict);
        if !matched {
            deviations.push(format!("{}: expected {:?}, got {:?}", c.key(), c.expect, verdict));
        }
        entries.push(CheckEntry {
            key: c.key().to_string(),
            kind: c.kind.clone(),
            expect: c.expect,
            matched,
            report: out.result.report,
        });
        outputs.push(NamedOutput { key: c.key().to_string(), table: out.result.table, artifact: out.artifact });
    }
    let implications = evaluate_implications(&entries);
    for imp in implications.iter().filter(|i| i.status == ImplicationStatus::Deviation) {
        let bad: Vec<&str> = imp
            .consequents
            .iter()
            .filter(|(_, s)| matches!(s, KindStatus::Failed | KindStatus::Errored))
            .map(|(k, _)| k.as_str())
            .collect();
        deviations.push(format!("{} certified but not: {}", imp.antecedent, bad.join(", ")));
    }
    let observations = evaluate_observations(&entries);
    let report = SuiteReport {
        name: config.name.clone(),
        points: exp.space().len(),
        checks: entries,
        implications,
        observations,
        deviations,
        warnings: exp.warnings.clone(),
        provenance: Provenance {
            config_hash: config.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: Timestamp { started_unix, wall_seconds: started.elapsed().as_secs_f64(), check_seconds },
            options: opts.clone(),
        },
    };
    Ok(SuiteRun { report, outputs, experiment: exp })
}
