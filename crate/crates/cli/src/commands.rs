//! Command implementations. Each is a thin layer over library calls so its
//! results can be reproduced directly.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use diffpass_core::conditions::Verdict;
use diffpass_core::examples::{
    conditions_for, lookup, oscillator, rc_circuit, OscillatorVariant, RegisteredExample, RigidBody, StorageChoice,
    REGISTRY,
};
use diffpass_core::model::{gradient_to_affine, ControlAffineSystem};
use diffpass_core::simulate::signal::SignalExpr;
use diffpass_core::simulate::{
    assemble_ensemble, dissipation_residual, BaseTrajectory, Ensemble, Horizon, Trajectory, DEFAULT_DT,
};
use diffpass_core::storage::{make_qpq_storage, natural_storage, QuadraticStorage};
use diffpass_core::{Error as CoreError, Mat};
use serde_json::{json, Value};

use crate::cli::{CheckArgs, DemoArgs, DemoName, SimulateArgs, StorageArg};
use crate::error::{exit, CliError};
use crate::report::{self, num, nums, STORAGE_CONVENTION};
use crate::{csv, parallel, spec, svg};

pub fn lookup_system(name: &str) -> Result<RegisteredExample, CliError> {
    lookup(name).ok_or_else(|| CliError::Usage(format!("unknown system `{name}`; known: {}", REGISTRY.join(", "))))
}

fn choice(s: StorageArg) -> StorageChoice {
    match s {
        StorageArg::Default => StorageChoice::Default,
        StorageArg::Custom => StorageChoice::Custom,
        StorageArg::Natural => StorageChoice::Natural,
        StorageArg::Qpq => StorageChoice::Qpq,
        StorageArg::Constant => StorageChoice::Constant,
    }
}

fn weight(p: Option<&str>, n: usize) -> Result<Option<Mat>, CliError> {
    p.map(|s| spec::matrix("--P", s, n)).transpose()
}

/// Storage used for simulation under a storage choice.
pub fn storage_for(ex: &RegisteredExample, s: StorageArg, p: Option<&Mat>) -> Result<QuadraticStorage, CliError> {
    let gradient = || {
        ex.gradient
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("{} has no gradient form; `{}` needs one", ex.name, s.as_str())))
    };
    Ok(match s {
        StorageArg::Default | StorageArg::Custom => ex.storage.clone(),
        StorageArg::Natural => natural_storage(gradient()?)?,
        StorageArg::Qpq => {
            let w = p.or(ex.qpq_weight.as_ref()).ok_or_else(|| CliError::Usage("--P is required".into()))?;
            make_qpq_storage(gradient()?, w)?
        }
        StorageArg::Constant => QuadraticStorage::constant(p.cloned().unwrap_or_else(|| Mat::identity(ex.system.n())))?,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path.display(), e))
}

fn emit_json(doc: &Value, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(doc).expect("JSON values serialize") + "\n";
    match path {
        Some(p) => write_file(p, &text),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e)),
    }
}

/// `<dir>/<stem>.<tag>.<ext>` next to `base`.
pub fn sibling(base: &Path, tag: &str, ext: &str) -> PathBuf {
    let stem = base.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    base.with_file_name(format!("{stem}.{tag}.{ext}"))
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => exit::PASS,
        Verdict::Boundary => exit::BOUNDARY,
        Verdict::Fail | Verdict::Invalid => exit::FAIL,
    }
}

pub fn check(a: &CheckArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let ex = lookup_system(&a.system)?;
    let (n, m) = (ex.system.n(), ex.system.m());
    let p = weight(a.p.as_deref(), n)?;
    if let Some(t) = a.tol {
        if !(t.is_finite() && t >= 0.0) {
            return Err(CliError::Usage(format!("--tol must be a non-negative number, got {t}")));
        }
    }
    let conds = conditions_for(&ex, choice(a.storage), p.as_ref())?;
    let mut grid = match &a.grid {
        Some(g) => spec::grid("--grid", g, n)?,
        None => ex.default_grid.clone(),
    };
    if let Some(u) = &a.u_samples {
        grid = grid.with_u_samples(spec::u_samples("--u-samples", u, m)?);
    }
    let workers = parallel::worker_count()?;
    let mut docs = Vec::new();
    let mut verdicts = Vec::new();
    for (name, cond) in &conds {
        let tol = a.tol.unwrap_or_else(|| cond.kind().default_tolerance());
        let rep = parallel::scan(cond.as_ref(), &grid, tol, workers);
        let table = match &a.table {
            Some(base) => {
                let path = sibling(base, name, "csv");
                write_file(&path, &csv::report_table(&rep))?;
                Some(path.display().to_string())
            }
            None => None,
        };
        verdicts.push(rep.verdict);
        docs.push(report::condition(name, &rep, table.as_deref()));
    }
    let verdict = Verdict::combine(verdicts);
    let doc = json!({
        "command": "check",
        "system": ex.name,
        "storage": a.storage.as_str(),
        "storage_convention": STORAGE_CONVENTION,
        "grid": spec::grid_text(&grid),
        "verdict": verdict.as_str(),
        "note": "input-dependent conditions are evaluated on the sampled inputs only",
        "conditions": docs,
    });
    emit_json(&doc, a.out.as_deref(), out)?;
    Ok(verdict_code(verdict))
}

fn base_of(tr: &Trajectory) -> BaseTrajectory {
    BaseTrajectory {
        dt: tr.dt,
        times: tr.times.clone(),
        x: tr.x.clone(),
        truncated_at: tr.truncated_at,
    }
}

/// Ensemble bookkeeping over already integrated prolonged members.
fn ensemble_of(members: &[diffpass_core::Result<Trajectory>]) -> Result<Ensemble, CliError> {
    let base = members
        .iter()
        .map(|m| m.as_ref().map(base_of).map_err(Clone::clone))
        .collect();
    Ok(assemble_ensemble(base, None)?)
}

fn ensemble_json(e: &Ensemble) -> Value {
    json!({
        "pairs": e.pairs,
        "final_spread": e.final_spread.map(num),
        "spread_until": e.times.last().copied().map(num),
        "spread_at_5": e.spread_at(5.0).map(num),
        "settling_time_0.05": e.settling_time(0.05).map(num),
    })
}

fn horizon(dt: f64, t_final: f64) -> Result<Horizon, CliError> {
    Horizon::new(dt, t_final).map_err(|e| CliError::Usage(format!("--dt/--T: {e}")))
}

pub fn simulate(a: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let ex = lookup_system(&a.system)?;
    let (n, m) = (ex.system.n(), ex.system.m());
    let x0_list: Vec<Vec<f64>> = if a.x0.is_empty() {
        vec![ex.default_x0.clone()]
    } else {
        a.x0.iter().map(|s| spec::vector_of("--x0", s, n)).collect::<Result<_, _>>()?
    };
    let dx0 = match &a.dx0 {
        Some(s) => spec::vector_of("--dx0", s, n)?,
        None => vec![1.0; n],
    };
    let u = match &a.u {
        Some(s) => spec::signals("--u", s, m)?,
        None => ex.default_input.clone(),
    };
    let du = match &a.du {
        Some(s) => spec::signals("--du", s, m)?,
        None => vec![SignalExpr::constant(0.0); m],
    };
    let dt = a.dt.unwrap_or(ex.default_dt);
    let h = horizon(dt, a.t_final)?;
    if !(a.rtol.is_finite() && a.rtol >= 0.0) {
        return Err(CliError::Usage(format!("--rtol must be a non-negative number, got {}", a.rtol)));
    }
    let p = weight(a.p.as_deref(), n)?;
    let st = storage_for(&ex, a.storage, p.as_ref())?;
    let workers = parallel::worker_count()?;
    let members = parallel::prolonged_members(&ex.system, &x0_list, &dx0, &u, &du, &st, h, workers);

    let mut entries = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut diverged = None;
    let mut truncated = false;
    for (k, (x0, r)) in x0_list.iter().zip(&members).enumerate() {
        match r {
            Ok(tr) => {
                let residual = dissipation_residual(tr);
                worst = worst.max(residual);
                truncated |= tr.truncated_at.is_some();
                let path = a.out.as_ref().map(|o| if x0_list.len() == 1 { o.clone() } else { sibling(o, &k.to_string(), "csv") });
                if let Some(path) = &path {
                    write_file(path, &csv::trajectory_csv(tr))?;
                }
                entries.push(json!({
                    "x0": nums(x0),
                    "csv": path.map(|p| p.display().to_string()),
                    "steps": tr.len() - 1,
                    "truncated_at": tr.truncated_at.map(num),
                    "dissipation_residual": num(residual),
                    "pass": residual <= a.rtol,
                }));
            }
            Err(CoreError::Diverged { t }) => {
                diverged.get_or_insert(*t);
                entries.push(json!({"x0": nums(x0), "diverged_at": num(*t), "pass": false}));
            }
            Err(e) => return Err(e.clone().into()),
        }
    }
    let ensemble = if x0_list.len() >= 2 { Some(ensemble_of(&members)?) } else { None };
    let pass = diverged.is_none() && worst <= a.rtol;
    let doc = json!({
        "command": "simulate",
        "system": ex.name,
        "storage": a.storage.as_str(),
        "storage_convention": STORAGE_CONVENTION,
        "dt": dt,
        "T": a.t_final,
        "rtol": a.rtol,
        "input": u.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        "input_variation": du.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        "dx0": nums(&dx0),
        "members": entries,
        "dissipation_residual": if worst.is_finite() { num(worst) } else { Value::Null },
        "final_spread": ensemble.as_ref().and_then(|e| e.final_spread).map(num),
        "ensemble": ensemble.as_ref().map(ensemble_json),
        "truncated": truncated,
        "pass": pass,
    });
    emit_json(&doc, a.summary.as_deref(), out)?;
    if let Some(t) = diverged {
        let _ = writeln!(err, "error: integration diverged at t = {t}");
        return Ok(exit::SOFTWARE);
    }
    Ok(if pass { exit::PASS } else { exit::FAIL })
}

/// One trajectory of a demo.
#[derive(Debug, Clone)]
pub struct DemoMember {
    pub label: String,
    pub x0: Vec<f64>,
    pub u: Vec<SignalExpr>,
}

/// Everything needed to regenerate a figure's data.
#[derive(Debug, Clone)]
pub struct DemoSpec {
    pub title: &'static str,
    pub system: ControlAffineSystem,
    pub storage: QuadraticStorage,
    pub members: Vec<DemoMember>,
    /// The first `ensemble` members share one input and form an ensemble.
    pub ensemble: usize,
    pub dx0: Vec<f64>,
    pub du: Vec<SignalExpr>,
    pub dt: f64,
    pub t_final: f64,
    /// Whether the run lies inside the certified regime.
    pub certified: bool,
    pub note: &'static str,
}

fn expr(s: &str) -> SignalExpr {
    SignalExpr::parse(s).expect("demo signal parses")
}

fn members(x0s: &[&[f64]], u: &[SignalExpr]) -> Vec<DemoMember> {
    x0s.iter()
        .enumerate()
        .map(|(k, x0)| DemoMember {
            label: format!("x0 = {x0:?} (member {k})"),
            x0: x0.to_vec(),
            u: u.to_vec(),
        })
        .collect()
}

pub fn demo_spec(name: DemoName) -> DemoSpec {
    let osc_x0: [&[f64]; 5] = [&[-2.5], &[-1.0], &[0.0], &[1.0], &[2.5]];
    let rb_x0: [&[f64]; 3] = [&[-0.3, 0.0, 0.0], &[0.0, 0.01, 0.0], &[0.3, 0.0, 0.01]];
    match name {
        DemoName::Fig1Small | DemoName::Fig1Large => {
            let o = oscillator(OscillatorVariant::C);
            let small = name == DemoName::Fig1Small;
            let u = vec![expr(if small { "1+0.5*sin(pi*t)" } else { "1+5*sin(pi*t)" })];
            DemoSpec {
                title: if small { "oscillator entrainment, u = 1+0.5 sin(pi t)" } else { "oscillator, u = 1+5 sin(pi t)" },
                system: o.system,
                storage: o.storage,
                members: members(&osc_x0, &u),
                ensemble: 5,
                dx0: vec![1.0],
                du: vec![expr("0")],
                dt: DEFAULT_DT,
                t_final: 10.0,
                certified: small,
                note: if small {
                    "members converge to the periodic response of the input"
                } else {
                    "not certified: large input driving the states toward the chart boundary, where the metric blows up; any domain exit is reported as truncation"
                },
            }
        }
        DemoName::Fig2 => {
            let rc = rc_circuit();
            let u = vec![expr("2+sin(2*pi*t)")];
            let mut ms = members(&[&[0.5], &[1.0], &[2.0], &[5.0]], &u);
            ms.push(DemoMember {
                label: "large harmonic input 5+5 sin(2 pi t)".into(),
                x0: vec![0.5],
                u: vec![expr("5+5*sin(2*pi*t)")],
            });
            DemoSpec {
                title: "RC circuit: contraction and large harmonic response",
                system: rc.system,
                storage: rc.storage,
                members: ms,
                ensemble: 4,
                dx0: vec![1.0],
                du: vec![expr("0")],
                dt: 1e-4,
                t_final: 10.0,
                certified: true,
                note: "first four members form the ensemble; the last is the response to a large harmonic input",
            }
        }
        DemoName::Fig3Track | DemoName::Fig3Feedback => {
            let rb = RigidBody::default();
            let d = expr("3*sin(pi*t)");
            let track = name == DemoName::Fig3Track;
            let (gs, u) = if track {
                (rb.closed_loop(), rb.tracking_input(&d).expect("default G is e1"))
            } else {
                (
                    rb.closed_loop_with_output_feedback(0.5),
                    rb.feedback_tracking_input(&d, 0.5).expect("default G is e1"),
                )
            };
            DemoSpec {
                title: if track { "rigid body tracking d = 3 sin(pi t)" } else { "rigid body tracking with output feedback" },
                system: gradient_to_affine(&gs),
                storage: rb.storage(),
                members: members(&rb_x0, &u),
                ensemble: 3,
                dx0: vec![1.0, 1.0, 1.0],
                du: vec![expr("0")],
                dt: DEFAULT_DT,
                t_final: 20.0,
                certified: true,
                note: if track {
                    "v = r1 d + d'"
                } else {
                    "v = -0.5 y + (r1 + 0.5) d + d'"
                },
            }
        }
    }
}

/// Prolonged trajectories of every demo member, in member order.
pub fn run_demo(spec: &DemoSpec, workers: usize) -> Result<Vec<diffpass_core::Result<Trajectory>>, CliError> {
    let h = horizon(spec.dt, spec.t_final)?;
    Ok(parallel::map_ordered(&spec.members, workers, |mb| {
        diffpass_core::simulate::integrate_prolonged(&spec.system, &mb.x0, &spec.dx0, &mb.u, &spec.du, &spec.storage, h)
    }))
}

/// Demo CSVs are written on a 1e-3 output grid whatever the step size.
pub fn demo_stride(dt: f64) -> usize {
    ((DEFAULT_DT / dt).round() as usize).max(1)
}

pub fn demo(a: &DemoArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let name = a.name.as_str();
    let spec = demo_spec(a.name);
    let workers = parallel::worker_count()?;
    let results = run_demo(&spec, workers)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(a.out_dir.display(), e))?;
    let stride = demo_stride(spec.dt);
    let mut entries = Vec::new();
    let mut series = Vec::new();
    let mut diverged = None;
    for (k, (mb, r)) in spec.members.iter().zip(&results).enumerate() {
        match r {
            Ok(tr) => {
                let path = a.out_dir.join(format!("{name}.{k}.csv"));
                write_file(&path, &csv::trajectory_csv_strided(tr, stride))?;
                for i in 0..mb.x0.len() {
                    series.push(svg::Series {
                        label: format!("{} x{}", mb.label, i + 1),
                        points: tr.times.iter().zip(&tr.x).map(|(t, x)| (*t, x[i])).collect(),
                        group: k,
                    });
                }
                entries.push(json!({
                    "label": mb.label,
                    "x0": nums(&mb.x0),
                    "input": mb.u.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
                    "csv": path.display().to_string(),
                    "truncated_at": tr.truncated_at.map(num),
                    "dissipation_residual": num(dissipation_residual(tr)),
                }));
            }
            Err(CoreError::Diverged { t }) => {
                diverged.get_or_insert(*t);
                entries.push(json!({"label": mb.label, "x0": nums(&mb.x0), "diverged_at": num(*t)}));
            }
            Err(e) => return Err(e.clone().into()),
        }
    }
    let ensemble = ensemble_of(&results[..spec.ensemble])?;
    let svg_path = a.out_dir.join(format!("{name}.svg"));
    write_file(&svg_path, &svg::line_plot(spec.title, "t", &series))?;
    let doc = json!({
        "command": "demo",
        "name": name,
        "title": spec.title,
        "certified": spec.certified,
        "note": spec.note,
        "dt": spec.dt,
        "T": spec.t_final,
        "output_stride": stride,
        "storage_convention": STORAGE_CONVENTION,
        "members": entries,
        "ensemble": ensemble_json(&ensemble),
        "svg": svg_path.display().to_string(),
    });
    let text = serde_json::to_string_pretty(&doc).expect("JSON values serialize") + "\n";
    write_file(&a.out_dir.join(format!("{name}.json")), &text)?;
    out.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e))?;
    Ok(if diverged.is_some() { exit::SOFTWARE } else { exit::PASS })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling(Path::new("/tmp/run/traj.csv"), "3", "csv"), PathBuf::from("/tmp/run/traj.3.csv"));
        assert_eq!(sibling(Path::new("table"), "killing", "csv"), PathBuf::from("table.killing.csv"));
    }

    #[test]
    fn storage_choices() {
        let rb = lookup_system("rigid-body").unwrap();
        assert!(matches!(storage_for(&rb, StorageArg::Natural, None), Err(CliError::Core(CoreError::NotAMetric { .. }))));
        let osc = lookup_system("osc-b").unwrap();
        assert!(matches!(storage_for(&osc, StorageArg::Qpq, None), Err(CliError::Usage(_))));
        let c = storage_for(&osc, StorageArg::Constant, Some(&Mat::scalar(3.0))).unwrap();
        assert_eq!(c.metric(&[0.4]).unwrap(), Mat::scalar(3.0));
        assert!(lookup_system("pendulum").is_err());
    }

    #[test]
    fn demo_specs_are_consistent() {
        for name in [DemoName::Fig1Small, DemoName::Fig1Large, DemoName::Fig2, DemoName::Fig3Track, DemoName::Fig3Feedback] {
            let s = demo_spec(name);
            assert!(s.ensemble >= 2 && s.ensemble <= s.members.len());
            let first = &s.members[0].u;
            assert!(s.members[..s.ensemble].iter().all(|m| &m.u == first));
            assert!(s.members.iter().all(|m| m.x0.len() == s.system.n() && m.u.len() == s.system.m()));
        }
        assert_eq!(demo_stride(1e-4), 10);
        assert_eq!(demo_stride(1e-3), 1);
        assert!(!demo_spec(DemoName::Fig1Large).certified);
    }
}
