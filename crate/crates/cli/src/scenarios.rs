use serde_json::{json, Value};
use thickstab_core::io::encode_mask;
use thickstab_core::observability::{
    classify_cubes, estimate_observability_constant, kovrijkine_empirical, necessity_probe_scan,
    negative_limit_experiment, synthesize_control, SynthesisOptions,
};
use thickstab_core::probe::random_probes;
use thickstab_core::qa::{log_convexity_report, MomentSearch, QASequence};
use thickstab_core::stabilizer::{
    design_feedback, estimate_spectral_constant, run_stabilization, Integrator, RunOptions,
};
use thickstab_core::{apply_semigroup, restricted_norm, thickness_certificate};

use crate::config::{missing, Resolved, RunSection};
use crate::error::CliError;
use crate::output::Artifacts;

/// Splitting runs beyond this many steps get a warning pointing at `integrator = "exact"`.
const STEP_WARNING: f64 = 1e7;

pub struct Outcome {
    /// Run keys after defaults are filled in.
    pub parameters: Value,
    pub results: Value,
}

fn get<T: Copy>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| missing(&format!("run.{key}")))
}

fn list<'a, T>(v: &'a Option<Vec<T>>, key: &str) -> Result<&'a [T], CliError> {
    v.as_deref().ok_or_else(|| missing(&format!("run.{key}")))
}

fn csv_float_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

pub fn run(name: &str, res: &Resolved, run: &RunSection, out: &mut Artifacts) -> Result<Outcome, CliError> {
    match name {
        "simulate" => simulate(res, run, out),
        "stabilize" => stabilize(res, run, out),
        "observability" => observability(res, run, out),
        "necessity" => necessity(res, run, out),
        "negative-limit" => negative_limit(res, run, out),
        "qa" => qa(res, run, out),
        "thick-check" => thick_check(res, run, out),
        "cubes" => cubes(res, run, out),
        "synthesize" => synthesize(res, run, out),
        "kovrijkine" => kovrijkine(res, run, out),
        other => Err(CliError::Config(format!("unknown scenario `{other}`"))),
    }
}

fn simulate(res: &Resolved, run: &RunSection, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let (sym, f0) = (res.symbol.as_ref().unwrap(), res.init.as_ref().unwrap());
    let t_final = get(run.t_final, "T")?;
    let samples = run.samples.unwrap_or(10);
    let mut csv = String::from("t,norm\n");
    let mut last = f0.clone();
    for i in 0..=samples {
        let t = t_final * i as f64 / samples as f64;
        last = apply_semigroup(f0, sym, t)?;
        csv.push_str(&format!("{t},{}\n", last.norm()));
    }
    out.write("simulate.csv", csv.as_bytes())?;
    out.write_field("snapshots/initial.tsf", f0)?;
    out.write_field("snapshots/final.tsf", &last)?;
    Ok(Outcome {
        parameters: json!({ "T": t_final, "samples": samples }),
        results: json!({
            "symbol": sym.to_string(),
            "inf_f": sym.inf_value(),
            "initial_norm": f0.norm(),
            "final_norm": last.norm(),
        }),
    })
}

fn stabilize(res: &Resolved, run: &RunSection, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let sym = res.symbol.as_ref().unwrap();
    let mask = res.mask.as_ref().unwrap();
    let f0 = res.init.as_ref().unwrap();
    let radius = get(run.band_radius, "R")?;
    let t_final = get(run.t_final, "T")?;
    let trials = run.trials.unwrap_or(4);
    let iterations = run.iterations.unwrap_or(500);
    let (constant, estimate) = match run.constant {
        Some(c) => (c, Value::Null),
        None => {
            let seed = get(run.seed, "seed")?;
            let est = estimate_spectral_constant(mask, radius, trials, iterations, seed)?;
            (est.value, serde_json::to_value(&est).expect("serializes"))
        }
    };
    let cfg = design_feedback(sym, radius, constant)?.with_adjoint_order(run.adjoint_order.unwrap_or(false));
    let exact = run.integrator.as_deref() == Some("exact");
    let dt = match run.dt {
        Some(dt) => dt,
        None if exact => t_final / 1000.0,
        None => (t_final / 1000.0).min(cfg.dt_max()),
    };
    if !exact && t_final / dt > STEP_WARNING {
        eprintln!(
            "warning: dt <= 0.1/lambda = {:e} forces {:.3e} splitting steps; consider run.integrator = \"exact\"",
            cfg.dt_max(),
            t_final / dt
        );
    }
    let opts = RunOptions {
        integrator: if exact { Integrator::Exact } else { Integrator::Splitting },
        snapshot_every: run.snapshot_every,
        tail_fraction: run.tail_fraction.unwrap_or(0.5),
    };
    let result = run_stabilization(f0, sym, mask, &cfg, t_final, dt, &opts)?;
    let traj = &result.trajectory;
    out.write("trajectory.csv", traj.to_csv().as_bytes())?;
    let mut index = String::from("index,t,file\n");
    for (i, (t, f)) in traj.snapshot_times.iter().zip(&traj.snapshots).enumerate() {
        let name = format!("snapshots/state_{i:05}.tsf");
        out.write_field(&name, f)?;
        index.push_str(&format!("{i},{t},{name}\n"));
    }
    if !traj.snapshots.is_empty() {
        out.write("snapshots.csv", index.as_bytes())?;
    }
    Ok(Outcome {
        parameters: json!({
            "R": radius,
            "C": constant,
            "T": t_final,
            "dt": result.dt,
            "steps": result.steps,
            "integrator": if exact { "exact" } else { "splitting" },
            "snapshot_every": run.snapshot_every,
            "tail_fraction": opts.tail_fraction,
            "adjoint_order": cfg.adjoint_order,
            "seed": run.seed,
            "trials": if run.constant.is_none() { Some(trials) } else { None },
            "iterations": if run.constant.is_none() { Some(iterations) } else { None },
        }),
        results: json!({
            "feedback": cfg,
            "spectral_constant": estimate,
            "fitted_rate": result.fitted_rate,
            "predicted_rate": cfg.predicted_rate,
            "alpha_tilde": cfg.alpha_tilde,
            "max_lyapunov_increase": traj.max_lyapunov_increase(),
            "initial_norm": traj.norms.first(),
            "final_norm": traj.norms.last(),
        }),
    })
}

fn observability(res: &Resolved, run: &RunSection, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let grid = res.grid.as_ref().unwrap();
    let sym = res.symbol.as_ref().unwrap();
    let mask = res.mask.as_ref().unwrap();
    let t = get(run.t_final, "T")?;
    let eps = get(run.epsilon, "epsilon")?;
    let seed = get(run.seed, "seed")?;
    let count = run.probes.unwrap_or(32);
    let wmin = run.width_min.unwrap_or(0.5);
    let wmax = run.width_max.unwrap_or(1.5);
    let steps = run.steps.unwrap_or(64);
    let probes = random_probes(grid, count, wmin, wmax, seed)?;
    let report = estimate_observability_constant(sym, mask, t, eps, &probes, steps)?;
    out.write("report.json", report.to_json().as_bytes())?;
    let mut csv = String::from("id,center,modulation,width,norm_sqr,lhs,obs_integral,required_c\n");
    for p in &report.probe_results {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.id,
            csv_float_list(&p.probe.center),
            csv_float_list(&p.probe.modulation),
            p.probe.width,
            p.norm_sqr,
            p.lhs,
            p.obs_integral,
            p.required_c
        ));
    }
    out.write("probes.csv", csv.as_bytes())?;
    Ok(Outcome {
        parameters: json!({
            "T": t, "epsilon": eps, "seed": seed, "probes": count,
            "width_min": wmin, "width_max": wmax, "steps": steps,
        }),
        results: json!({
            "c_est": report.c_est,
            "c_est_infinite": report.c_est_infinite,
            "mask_hash": report.mask_hash,
        }),
    })
}

fn necessity(res: &Resolved, run: &RunSection, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let sym = res.symbol.as_ref().unwrap();
    let mask = res.mask.as_ref().unwrap();
    let t = get(run.t_final, "T")?;
    let eps = get(run.epsilon, "epsilon")?;
    let c = get(run.constant, "C")?;
    let width = get(run.width, "width")?;
    let centers = list(&run.centers, "centers")?;
    let steps = run.steps.unwrap_or(64);
    let scan = necessity_probe_scan(sym, mask, t, eps, c, centers, width, steps)?;
    let mut csv = String::from("center,lhs,obs_integral,required_c\n");
    for r in &scan.rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            csv_float_list(&r.center),
            r.lhs,
            r.obs_integral,
            r.required_c
        ));
    }
    out.write("necessity.csv", csv.as_bytes())?;
    Ok(Outcome {
        parameters: json!({
            "T": t, "epsilon": eps, "C": c, "width": width, "centers": centers, "steps": steps,
        }),
        results: json!({ "modulation": scan.modulation, "witness": scan.witness }),
    })
}

fn negative_limit(res: &Resolved, run: &RunSection, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let sym = res.symbol.as_ref().unwrap();
    let psi = res.init.as_ref().unwrap();
    let ladder = list(&run.h_ladder, "h_ladder")?;
    let center = list(&run.center, "center")?;
    let radius = get(run.radius, "radius")?;
    let t0 = get(run.t_final, "T")?;
    let steps = run.steps.unwrap_or(64);
    let rows = negative_limit_experiment(sym, psi, center, radius, ladder, t0, steps)?;
    let mut csv = String::from("h,integral,constant\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.h, r.integral, r.constant));
    }
    out.write("negative_limit.csv", csv.as_bytes())?;
    let increasing = rows.windows(2).all(|w| w[1].constant > w[0].constant);
    Ok(Outcome {
        parameters: json!({
            "h_ladder": ladder, "center": center, "radius": radius, "T": t0, "steps": steps,
        }),
        results: json!({ "constants_increasing": increasing, "rows": rows }),
    })
}

fn qa(res: &Resolved, run: &RunSection, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let sym = res.symbol.as_ref().unwrap();
    let k_max = get(run.k_max, "k_max")?;
    let seq = QASequence::build(sym, k_max, &MomentSearch::default())?;
    out.write("qa.csv", seq.to_csv().as_bytes())?;
    let convexity = if k_max >= 2 {
        let r = log_convexity_report(&seq)?;
        json!({ "holds": r.holds, "worst_violation": r.worst_violation, "worst_k": r.worst_k })
    } else {
        Value::Null
    };
    Ok(Outcome {
        parameters: json!({ "k_max": k_max }),
        results: json!({
            "symbol": sym.to_string(),
            "dc_partial_sum": seq.ratios().iter().sum::<f64>(),
            "log_convexity": convexity,
        }),
    })
}

fn thick_check(res: &Resolved, run: &RunSection, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let mask = res.mask.as_ref().unwrap();
    let scale = get(run.scale, "L")?;
    let stride = run.stride.unwrap_or(1);
    let gamma = thickness_certificate(mask, scale, stride)?;
    out.write("mask.tsm", &encode_mask(mask))?;
    out.write("thickness.csv", format!("L,stride,gamma\n{scale},{stride},{gamma}\n").as_bytes())?;
    let volume = mask.grid().volume();
    Ok(Outcome {
        parameters: json!({ "L": scale, "stride": stride }),
        results: json!({
            "gamma": gamma,
            "measure_fraction": mask.total_measure() / volume,
            "certificate": mask.certificate().map(|c| json!({ "gamma": c.gamma, "L": c.scale })),
            "mask_hash": mask.content_hash(),
        }),
    })
}

fn cubes(res: &Resolved, run: &RunSection, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let sym = res.symbol.as_ref().unwrap();
    let g = res.init.as_ref().unwrap();
    let t = get(run.t_final, "T")?;
    let eps = get(run.epsilon, "epsilon")?;
    let scale = get(run.scale, "L")?;
    let beta_max = run.beta_max.unwrap_or(4);
    let report = classify_cubes(g, sym, t, eps, scale, beta_max)?;
    out.write("cubes.csv", report.to_csv().as_bytes())?;
    Ok(Outcome {
        parameters: json!({ "T": t, "epsilon": eps, "L": scale, "beta_max": beta_max }),
        results: json!({
            "bad_fraction": report.bad_fraction,
            "bad_mass": report.bad_mass,
            "mass_bound": report.mass_bound,
            "tail_bound": report.tail_bound,
        }),
    })
}

fn synthesize(res: &Resolved, run: &RunSection, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let sym = res.symbol.as_ref().unwrap();
    let mask = res.mask.as_ref().unwrap();
    let f0 = res.init.as_ref().unwrap();
    let t = get(run.t_final, "T")?;
    let eps = get(run.epsilon, "epsilon")?;
    let opts = SynthesisOptions {
        slices: run.slices.unwrap_or(32),
        ..SynthesisOptions::default()
    };
    let syn = synthesize_control(f0, sym, mask, t, eps, &opts)?;
    let mut csv = String::from("slice,t0,t1,control_norm,file\n");
    for (i, h) in syn.controls.iter().enumerate() {
        let name = format!("snapshots/control_{i:05}.tsf");
        out.write_field(&name, h)?;
        csv.push_str(&format!("{i},{},{},{},{name}\n", syn.times[i], syn.times[i + 1], h.norm()));
    }
    out.write("controls.csv", csv.as_bytes())?;
    out.write_field("snapshots/final.tsf", &syn.final_state)?;
    Ok(Outcome {
        parameters: json!({
            "T": t, "epsilon": eps, "slices": opts.slices, "tolerance": opts.tolerance,
            "max_iterations": opts.max_iterations, "penalties": opts.penalties,
        }),
        results: json!({
            "cost": syn.cost,
            "penalty": syn.penalty,
            "achieved_ratio": syn.achieved_ratio,
            "cg_iterations": syn.cg_iterations,
            "final_norm": syn.final_state.norm(),
            "final_norm_on_mask": restricted_norm(&syn.final_state, mask)?,
        }),
    })
}

fn kovrijkine(res: &Resolved, run: &RunSection, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let mask = res.mask.as_ref().unwrap();
    let radii = list(&run.radii, "radii")?;
    let seed = get(run.seed, "seed")?;
    let c_n = run.c_n.unwrap_or(std::f64::consts::E);
    let trials = run.trials.unwrap_or(4);
    let iterations = run.iterations.unwrap_or(1000);
    let fit = kovrijkine_empirical(mask, radii, c_n, trials, iterations, seed)?;
    let mut csv = String::from("R,C_emp,log_C_emp\n");
    for (r, c) in fit.radii.iter().zip(&fit.constants) {
        csv.push_str(&format!("{r},{c},{}\n", c.ln()));
    }
    out.write("kovrijkine.csv", csv.as_bytes())?;
    Ok(Outcome {
        parameters: json!({
            "radii": radii, "seed": seed, "c_n": c_n, "trials": trials, "iterations": iterations,
        }),
        results: serde_json::to_value(&fit).expect("serializes"),
    })
}
