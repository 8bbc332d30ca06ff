use serde::Serialize;
use serde_json::json;

use ouqueue::bounds::{
    figure_data, kappa_threshold, plot_script, reduced_rate_gen_fn, reduced_rate_remainder, rows_to_csv,
    rsr_first_order, BoundBreakdown, E_B,
};
use ouqueue::expansion::{eval_series, theta_norm_bound, Expansion, SeriesTerm, ThetaBound};
use ouqueue::model::{check_conditions, ConditionReport};
use ouqueue::oracle::{solve, Observables};
use ouqueue::simulate::{batches_to_csv, run, SimEstimate};

use crate::config::Config;
use crate::manifest::OutputDir;
use crate::CliError;

/// What a command returns for the terminal.
pub type Summary = String;

fn csv_num(x: f64) -> String {
    format!("{x:e}")
}

pub fn check(cfg: &Config, out: &mut OutputDir) -> Result<Summary, CliError> {
    let report: ConditionReport = check_conditions(&cfg.model);
    out.write_json("check.json", &report)?;
    serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))
}

#[derive(Serialize)]
struct UPoint {
    u: f64,
    value: f64,
    tail_estimate: Option<f64>,
}

#[derive(Serialize)]
struct ExpandReport<'a> {
    order: usize,
    epsilon: f64,
    terms: &'a [SeriesTerm],
    radius: ThetaBound,
    /// `eps m ||Theta||`; the series is only guaranteed to converge below 1.
    radius_ratio: f64,
    warning: Option<String>,
    partial_sums: Vec<UPoint>,
}

pub fn expand(cfg: &Config, order: usize, out: &mut OutputDir) -> Result<Summary, CliError> {
    let p = &cfg.model;
    if order > cfg.expand.max_order {
        return Err(CliError::Config(format!(
            "order {order} exceeds expand.max_order {}",
            cfg.expand.max_order
        )));
    }
    let exp = Expansion::new(p, order)?;
    let mut csv = String::from("u");
    for k in 0..=order {
        csv.push_str(&format!(",order_{k}"));
    }
    csv.push_str(",first_order_formula\n");
    let mut points = Vec::new();
    let mut warning = None;
    for &u in &cfg.expand.u_grid {
        csv.push_str(&csv_num(u));
        for k in 0..=order {
            csv.push(',');
            csv.push_str(&csv_num(exp.mean_partial_sum(k, u)));
        }
        csv.push(',');
        csv.push_str(&csv_num(rsr_first_order(p, u)));
        csv.push('\n');
        let ev = eval_series(p, order, u)?;
        warning = warning.or(ev.warning);
        points.push(UPoint {
            u,
            value: ev.value,
            tail_estimate: ev.tail_estimate.is_finite().then_some(ev.tail_estimate),
        });
    }
    let radius = theta_norm_bound(p);
    let report = ExpandReport {
        order,
        epsilon: p.epsilon,
        terms: &exp.terms,
        radius_ratio: p.epsilon * p.m.abs() * radius.bound,
        radius,
        warning,
        partial_sums: points,
    };
    out.write_json("expand.json", &report)?;
    out.write("expand.csv", &csv)?;
    Ok(format!(
        "order {order} expansion at eps = {:e}: {} u points, eps m ||Theta|| = {:.3e}",
        p.epsilon,
        cfg.expand.u_grid.len(),
        report.radius_ratio
    ))
}

#[derive(Serialize)]
struct ReducedRateRow {
    u: f64,
    first_order: f64,
    reduced_rate: f64,
    remainder_direct: f64,
    remainder_bound_form: f64,
}

#[derive(Serialize)]
struct BoundsReport {
    breakdown: BoundBreakdown,
    /// Largest `eps` passing the kappa ratio test at `j_max`.
    kappa_threshold: f64,
    reduced_rate: Vec<ReducedRateRow>,
}

pub fn bounds(cfg: &Config, out: &mut OutputDir) -> Result<Summary, CliError> {
    let p = &cfg.model;
    let breakdown = E_B(p, cfg.bounds.j_max)?;
    let mut rows = Vec::new();
    for &u in &cfg.bounds.u_grid {
        let rem = reduced_rate_remainder(p, u)?;
        rows.push(ReducedRateRow {
            u,
            first_order: rsr_first_order(p, u),
            reduced_rate: reduced_rate_gen_fn(p, u)?,
            remainder_direct: rem.direct,
            remainder_bound_form: rem.bound_form,
        });
    }
    let report = BoundsReport {
        kappa_threshold: kappa_threshold(p, cfg.bounds.j_max),
        breakdown,
        reduced_rate: rows,
    };
    out.write_json("bounds.json", &report)?;
    let b = &report.breakdown;
    Ok(format!(
        "E_B = {:e} (D {:e}, kappa {:e}, quadratic {:e})",
        b.e_b_total, b.e_b_terms[0], b.e_b_terms[1], b.e_b_terms[2]
    ))
}

#[derive(Serialize)]
struct OracleReport {
    residual: f64,
    n_x: usize,
    n_q: usize,
    observables: Vec<Observables>,
}

pub fn oracle(cfg: &Config, out: &mut OutputDir) -> Result<Summary, CliError> {
    let table = solve(&cfg.model, &cfg.oracle.solver())?;
    let observables: Vec<Observables> = cfg.oracle.u_grid.iter().map(|&u| table.observables(u)).collect();
    let report = OracleReport {
        residual: table.residual,
        n_x: table.n_x(),
        n_q: table.n_q,
        observables,
    };
    out.write_json("oracle.json", &report)?;
    out.write("oracle_joint.csv", &table.to_csv())?;
    Ok(format!(
        "oracle solved on {} x {} states, residual {:.2e}, E[L] = {:.6}",
        table.n_x(),
        table.n_q + 1,
        table.residual,
        report.observables.first().map_or(f64::NAN, |o| o.mean_queue)
    ))
}

fn simulate_estimate(cfg: &Config, out: &mut OutputDir) -> Result<SimEstimate, CliError> {
    let report = run(&cfg.model, &cfg.simulate)?;
    out.note("simulation_wall_clock_secs", json!(report.wall_clock_secs));
    Ok(report.estimate)
}

pub fn simulate(cfg: &Config, out: &mut OutputDir) -> Result<Summary, CliError> {
    let est = simulate_estimate(cfg, out)?;
    out.write_json("simulate.json", &est)?;
    out.write("simulate_batches.csv", &batches_to_csv(&est))?;
    Ok(format!(
        "{} events, E[L] = {:.5} +- {:.5}",
        est.events, est.mean_queue, est.mean_queue_se
    ))
}

pub const VALIDATE_HEADER: &str = "u,series_order1,series_order2,oracle,simulation,simulation_se,\
oracle_minus_order1,oracle_minus_order2,simulation_minus_oracle,simulation_minus_order1,order1_tolerance,order1_pass";

pub fn validate(cfg: &Config, with_sim: bool, out: &mut OutputDir) -> Result<Summary, CliError> {
    let p = &cfg.model;
    let v = &cfg.validate;
    let exp = Expansion::new(p, 2)?;
    let table = solve(p, &cfg.oracle.solver())?;
    let sim = if with_sim {
        let sim_cfg = ouqueue::simulate::SimConfig {
            u_grid: v.u_grid.clone(),
            ..cfg.simulate.clone()
        };
        let report = run(p, &sim_cfg)?;
        out.note("simulation_wall_clock_secs", json!(report.wall_clock_secs));
        Some(report.estimate)
    } else {
        None
    };
    let tol = v.c_eps2 * p.epsilon * p.epsilon + v.disc_tol;
    let mut csv = String::from(VALIDATE_HEADER);
    csv.push('\n');
    let mut passed = 0;
    for (k, &u) in v.u_grid.iter().enumerate() {
        let s1 = exp.mean_partial_sum(1, u);
        let s2 = exp.mean_partial_sum(2, u);
        let o = table.gen_fn(u);
        let (sv, se) = sim
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |s| (s.gen_fn[k], s.gen_fn_se[k]));
        let ok = (o - s1).abs() <= tol;
        passed += ok as usize;
        let cols = [s1, s2, o, sv, se, o - s1, o - s2, sv - o, sv - s1, tol];
        let body: Vec<String> = cols.iter().map(|&x| csv_num(x)).collect();
        csv.push_str(&format!(
            "{},{},{}\n",
            csv_num(u),
            body.join(","),
            if ok { "pass" } else { "fail" }
        ));
    }
    out.write("validate.csv", &csv)?;
    Ok(format!(
        "order-1 check passed at {passed}/{} u points (tolerance {tol:.2e}){}",
        v.u_grid.len(),
        if with_sim { ", simulation included" } else { "" }
    ))
}

pub fn figures(cfg: &Config, out: &mut OutputDir) -> Result<Summary, CliError> {
    let tables = figure_data(&cfg.model, &cfg.figures)?;
    out.write("fig1_bound_vs_eps.csv", &rows_to_csv(&tables.by_epsilon))?;
    out.write("fig2_bound_vs_sigma.csv", &rows_to_csv(&tables.by_sigma))?;
    out.write(
        "figures.gp",
        &plot_script("fig1_bound_vs_eps.csv", "fig2_bound_vs_sigma.csv", &cfg.figures),
    )?;
    let notes: Vec<_> = tables
        .by_epsilon
        .iter()
        .chain(&tables.by_sigma)
        .filter_map(|r| {
            r.note
                .as_ref()
                .map(|n| json!({"series": r.series, "sweep": r.sweep, "note": n}))
        })
        .collect();
    let total = tables.by_epsilon.len() + tables.by_sigma.len();
    out.write_json("figures_divergent.json", &notes)?;
    Ok(format!(
        "{total} rows written, {} without a convergent kappa series",
        notes.len()
    ))
}
