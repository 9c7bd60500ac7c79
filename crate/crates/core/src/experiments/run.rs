//! Experiment runners and run-directory writers.

use std::fmt::Write as _;
use std::path::Path;

use super::data::GroundTruth;
use super::spec::{AlgoChoice, ExperimentId, ExperimentSpec};
use crate::bregman::{bregman_run, bregman_until, BregmanRun};
use crate::diagnostics::psnr;
use crate::error::{Error, Result};
use crate::fields::io::{write_field, write_pgm};
use crate::fields::Field;
use crate::nested::{run_nested, Algorithm, NestedOptions, StopRule, SubgradientRule, Trajectory};
use crate::solvers::{solve_morozov, solve_morozov_warm, solve_tikhonov_warm, DecompositionProblem, PdhgState};

/// Per-step record of a run.
#[derive(Clone, Debug)]
pub enum RunRecord {
    Nested(Trajectory),
    /// Bregman steps with `(psnr_u, psnr_v, psnr_x)` per step.
    Bregman { run: BregmanRun, psnr: Vec<[f64; 3]> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub stop_index: usize,
    pub stop_rule: String,
    /// PSNR sum of the components at the stop index.
    pub psnr_at_stop: f64,
    pub psnr_max: f64,
    pub psnr_max_index: usize,
    /// Tikhonov multiplier (Bregman-type runs) or the last Morozov multiplier.
    pub lambda: f64,
}

impl RunSummary {
    pub fn to_line(&self) -> String {
        format!(
            "stop_index={} stop_rule={} psnr_at_stop={:?} psnr_max={:?} psnr_max_index={} steps={} lambda={:?}",
            self.stop_index,
            self.stop_rule,
            self.psnr_at_stop,
            self.psnr_max,
            self.psnr_max_index,
            self.steps,
            self.lambda
        )
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub spec: ExperimentSpec,
    pub truth: GroundTruth,
    pub record: RunRecord,
    pub u: Field,
    pub v: Field,
    pub summary: RunSummary,
}

/// Reference components in the order the problem uses them.
fn references(spec: &ExperimentSpec, truth: &GroundTruth) -> (Field, Field) {
    if spec.swap_roles {
        (truth.v_true.clone(), truth.u_true.clone())
    } else {
        (truth.u_true.clone(), truth.v_true.clone())
    }
}

/// A quarter of the single-step Morozov multiplier: the Tikhonov weights
/// matched to the noise level, multiplied by four.
pub fn default_bregman_lambda(prob: &DecompositionProblem, spec: &ExperimentSpec) -> Result<f64> {
    Ok(solve_morozov(prob, &spec.solver_config())?.lambda / 4.0)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunOutcome> {
    spec.validate()?;
    let truth = spec.ground_truth()?;
    let prob = spec.problem(&truth)?;
    let cfg = spec.solver_config();
    let (u_ref, v_ref) = references(spec, &truth);
    let lambda = match (spec.algo.uses_lambda(), spec.lambda) {
        (false, _) => None,
        (true, Some(l)) => Some(l),
        (true, None) => Some(default_bregman_lambda(&prob, spec)?),
    };
    let mut opts = NestedOptions::new(SubgradientRule::default_for(&prob.g)).with_reference(u_ref.clone(), v_ref.clone());
    opts.probe_seed = spec.seed;
    let nested = |prob: &DecompositionProblem, algo: Algorithm, max_outer: usize| {
        run_nested(prob, algo, max_outer, StopRule::FirstLocalMinCorrelation, &opts, &cfg)
    };
    let record = match spec.algo {
        AlgoChoice::Morozov => RunRecord::Nested(nested(&prob, Algorithm::Morozov, spec.max_outer)?),
        AlgoChoice::SingleStepMorozov => RunRecord::Nested(nested(&prob, Algorithm::Morozov, 1)?),
        AlgoChoice::BregmanInner => {
            let algo = Algorithm::InnerBregman { lambda: lambda.unwrap(), tau: spec.tau, max_inner: spec.max_inner };
            RunRecord::Nested(nested(&prob, algo, spec.max_outer)?)
        }
        AlgoChoice::NoiseFree => {
            let clean = DecompositionProblem { f_delta: truth.f_clean.clone(), delta: 0.0, ..prob.clone() };
            let algo = Algorithm::NoiseFree { lambda: lambda.unwrap(), eq_tol: spec.eq_tol, max_inner: spec.max_inner };
            RunRecord::Nested(nested(&clean, algo, spec.max_outer)?)
        }
        AlgoChoice::ClassicBregman => {
            let run = bregman_run(&prob, lambda.unwrap(), spec.tau, spec.max_inner, &cfg)?;
            bregman_record(run, &u_ref, &v_ref, &truth.x_true)?
        }
        AlgoChoice::SingleStepTikhonov => {
            let run = bregman_until(&prob, lambda.unwrap(), |_| true, 1, &cfg)?;
            bregman_record(run, &u_ref, &v_ref, &truth.x_true)?
        }
    };
    let (u, v, summary) = summarize(&record, lambda);
    Ok(RunOutcome { spec: spec.clone(), truth, record, u, v, summary })
}

fn bregman_record(run: BregmanRun, u_ref: &Field, v_ref: &Field, x_ref: &Field) -> Result<RunRecord> {
    let psnr = run
        .states
        .iter()
        .map(|s| Ok([psnr(&s.u, u_ref)?, psnr(&s.v, v_ref)?, psnr(&s.u.add(&s.v), x_ref)?]))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunRecord::Bregman { run, psnr })
}

fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (1, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i + 1, v);
        }
    }
    best
}

fn summarize(record: &RunRecord, lambda: Option<f64>) -> (Field, Field, RunSummary) {
    match record {
        RunRecord::Nested(traj) => {
            let sums = |t: &Trajectory| t.states.iter().map(|s| s.psnr_sum().unwrap_or(f64::NAN)).collect::<Vec<_>>();
            let all = sums(traj);
            let (psnr_max_index, psnr_max) = argmax(all.iter().copied());
            let stop = traj.stopped();
            let summary = RunSummary {
                steps: traj.states.len(),
                stop_index: traj.stop_index,
                stop_rule: match traj.stop_rule {
                    StopRule::FirstLocalMinCorrelation => "first_local_min_correlation",
                    StopRule::MaxOuter => "max_outer",
                    StopRule::BestPsnrOracle => "best_psnr_oracle",
                }
                .into(),
                psnr_at_stop: all[traj.stop_index - 1],
                psnr_max,
                psnr_max_index,
                lambda: lambda.unwrap_or(stop.lambda_used),
            };
            (stop.u.clone(), stop.v.clone(), summary)
        }
        RunRecord::Bregman { run, psnr } => {
            let (psnr_max_index, psnr_max) = argmax(psnr.iter().map(|p| p[0] + p[1]));
            let stop_index = run.stop_index.unwrap_or(run.states.len());
            let stop = run.stopped();
            let summary = RunSummary {
                steps: run.states.len(),
                stop_index,
                stop_rule: if run.stop_index.is_some() { "discrepancy" } else { "max_steps" }.into(),
                psnr_at_stop: psnr[stop_index - 1][0] + psnr[stop_index - 1][1],
                psnr_max,
                psnr_max_index,
                lambda: run.lambda,
            };
            (stop.u.clone(), stop.v.clone(), summary)
        }
    }
}

/// CSV of a classical Bregman run with per-step PSNR.
pub fn bregman_csv(run: &BregmanRun, psnr: &[[f64; 3]]) -> String {
    let mut out = String::from("k,residual,g_value,h_value,objective,psnr_u,psnr_v,psnr_x,stop_flag\n");
    let stop = run.stop_index.unwrap_or(run.states.len());
    for (s, p) in run.states.iter().zip(psnr) {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            s.k,
            s.residual,
            s.g_value,
            s.h_value,
            s.objective,
            p[0],
            p[1],
            p[2],
            u8::from(s.k == stop)
        );
    }
    out
}

/// Writes the run directory: `config.txt` (canonical, reproduces the run),
/// `input_config.txt` (the given config verbatim, if any), the per-step CSV,
/// FIELD files and PGM previews of the components, and `summary.txt`.
pub fn write_run(outcome: &RunOutcome, dir: &Path, input_config: Option<&str>) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut spec = outcome.spec.clone();
    spec.output_dir = dir.to_path_buf();
    std::fs::write(dir.join("config.txt"), spec.to_config_text())?;
    if let Some(text) = input_config {
        std::fs::write(dir.join("input_config.txt"), text)?;
    }
    match &outcome.record {
        RunRecord::Nested(t) => std::fs::write(dir.join("trajectory.csv"), t.to_csv())?,
        RunRecord::Bregman { run, psnr } => std::fs::write(dir.join("bregman.csv"), bregman_csv(run, psnr))?,
    }
    let x = outcome.u.add(&outcome.v);
    let fields = [
        ("u", &outcome.u),
        ("v", &outcome.v),
        ("x", &x),
        ("f_delta", &outcome.truth.f_delta),
        ("u_true", &outcome.truth.u_true),
        ("v_true", &outcome.truth.v_true),
    ];
    for (name, field) in fields {
        write_field(&dir.join(format!("{name}.field")), field)?;
        write_pgm(&dir.join(format!("{name}.pgm")), field)?;
    }
    std::fs::write(dir.join("summary.txt"), outcome.summary.to_line() + "\n")?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    MorozovSingleStep,
    TikhonovSingleStep,
}

impl std::str::FromStr for SweepMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "morozov-single-step" | "single-step-morozov" | "morozov" => Ok(Self::MorozovSingleStep),
            "tikhonov-single-step" | "single-step-tikhonov" | "tikhonov" => Ok(Self::TikhonovSingleStep),
            _ => Err(Error::Parse(format!("unknown sweep mode '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub lambda: f64,
    pub residual: f64,
    pub psnr_u: f64,
    pub psnr_v: f64,
    pub psnr_x: f64,
}

impl SweepRow {
    pub fn psnr_sum(&self) -> f64 {
        self.psnr_u + self.psnr_v
    }
}

/// Single-step decompositions over a grid of the first weight (`alpha`, or
/// `alpha1` for the third experiment), each solve warm-started from the last.
pub fn sweep_alphas(spec: &ExperimentSpec, alphas: &[f64], mode: SweepMode) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let truth = spec.ground_truth()?;
    let cfg = spec.solver_config();
    let (u_ref, v_ref) = references(spec, &truth);
    let mut warm: Option<(PdhgState, f64)> = None;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut s = spec.clone();
        match s.experiment {
            ExperimentId::Exp3TgvOsci => s.alpha1 = alpha,
            _ => s.alpha = alpha,
        }
        let prob = s.problem(&truth)?;
        let r = match mode {
            SweepMode::MorozovSingleStep => solve_morozov_warm(&prob, &cfg, warm.as_ref().map(|(st, l)| (st, *l)))?,
            SweepMode::TikhonovSingleStep => {
                solve_tikhonov_warm(&prob, spec.lambda.unwrap_or(1.0), &cfg, warm.as_ref().map(|(st, _)| st))?
            }
        };
        rows.push(SweepRow {
            alpha,
            lambda: r.lambda,
            residual: r.residual,
            psnr_u: psnr(&r.u, &u_ref)?,
            psnr_v: psnr(&r.v, &v_ref)?,
            psnr_x: psnr(&r.u.add(&r.v), &truth.x_true)?,
        });
        warm = Some((r.state, r.lambda));
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,lambda,residual,psnr_u,psnr_v,psnr_sum,psnr_x\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.alpha,
            r.lambda,
            r.residual,
            r.psnr_u,
            r.psnr_v,
            r.psnr_sum(),
            r.psnr_x
        );
    }
    out
}
