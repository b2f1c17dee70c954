use serde::Serialize;
use va_affine::affine::MARTINGALE_TOL;
use va_affine::config::load_model;
use va_affine::oracle::mc_stock_ratio;
use va_affine::{
    compare, mc_price, simulate, Engine, Error, Fault, KappaBranch, Leg, McMode, McReport,
    PriceReport, QuadratureSpec, Valuation,
};

use crate::inputs::{quadrature, write_output, CliError, CliResult, Inputs};
use crate::{FaultArg, MartingaleArgs, McArgs, PriceArgs, SweepArgs, SweepParameter, VerifyArgs};

/// Paths used when a leg has to be simulated during `price` or `sweep`.
const FALLBACK_PATHS: usize = 100_000;
const VERIFY_PATHS: usize = 1_000_000;

pub fn price(args: &PriceArgs) -> CliResult<u8> {
    let inputs = Inputs::load(&args.inputs)?;
    let quad = quadrature(&args.quad)?;
    let report = price_report(&inputs, quad, args.mc, args.closed_form_only)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_output(args.out.as_deref(), &json)?;
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::write(path, e))?;
        w.write_record(["name", "value"])
            .map_err(|e| CliError::write(path, e))?;
        for (name, value) in report.rows() {
            w.write_record([name, value.to_string()])
                .map_err(|e| CliError::write(path, e))?;
        }
        w.flush().map_err(|e| CliError::write(path, e))?;
    }
    Ok(0)
}

/// Closed-form legs where available; the others come from the g-weighted
/// oracle unless `closed_form_only` is set.
fn price_report(
    inputs: &Inputs,
    quad: QuadratureSpec,
    mc: McArgs,
    closed_form_only: bool,
) -> CliResult<PriceReport> {
    let val = Valuation::new(
        &inputs.model,
        &inputs.market,
        &inputs.contract,
        &inputs.loadings,
        quad,
    );
    let mut d = val.base_diagnostics()?;
    let mut missing: Vec<(Leg, String)> = Vec::new();
    let mut closed = |leg: Leg, r: va_affine::Result<()>| -> CliResult<bool> {
        match r {
            Ok(()) => Ok(true),
            Err(e @ (Error::UnsupportedContract(_) | Error::UnsupportedCopula(_)))
                if !closed_form_only =>
            {
                missing.push((leg, e.to_string()));
                Ok(false)
            }
            Err(e) => Err(e.into()),
        }
    };

    let mut legs = [0.0; 4];
    let mut tail: f64 = 0.0;
    if closed(
        Leg::Premium,
        val.premium_terms().map(|t| d.premium_terms = t),
    )? {
        legs[0] = d.premium_terms.iter().sum();
    }
    if closed(Leg::Sb, val.sb_terms().map(|t| d.sb_terms = t))? {
        legs[1] = d.sb_terms.iter().sum();
    }
    if closed(
        Leg::Gmab,
        val.gmab_parts().map(|(g, c, t)| {
            d.gmab_guarantee_term = g;
            d.gmab_call_term = c;
            tail = tail.max(t);
        }),
    )? {
        legs[2] = d.gmab_guarantee_term + d.gmab_call_term;
    }
    if closed(
        Leg::Db,
        val.db_terms().map(|(terms, t)| {
            d.db_terms = terms;
            tail = tail.max(t);
        }),
    )? {
        legs[3] = d.db_terms.iter().sum();
    }
    d.max_tail_estimate = tail;

    if !missing.is_empty() {
        let paths = mc.paths.unwrap_or(FALLBACK_PATHS);
        let report = simulate_all(inputs, paths, mc.seed)?;
        for (leg, why) in missing {
            let est = report.get(leg, McMode::GWeighted);
            let k = Leg::ALL.iter().position(|l| *l == leg).expect("leg listed");
            legs[k] = est.mean;
            d.mc_stderr.insert(leg.name().to_string(), est.stderr);
            d.notes.push(format!(
                "{}: Monte Carlo g_weighted estimate, {paths} paths, seed {} ({why})",
                leg.name(),
                mc.seed
            ));
        }
    }
    Ok(PriceReport::assemble(legs[0], legs[2], legs[1], legs[3], d))
}

fn simulate_all(inputs: &Inputs, paths: usize, seed: u64) -> CliResult<McReport> {
    let ensemble = simulate(&inputs.model, inputs.contract.maturity, paths, seed);
    Ok(mc_price(
        &inputs.market,
        &inputs.contract,
        &inputs.loadings,
        &ensemble,
    )?)
}

#[derive(Debug, Serialize)]
struct VerifyRow {
    leg: &'static str,
    closed_form: f64,
    mc_mean: f64,
    mc_stderr: f64,
    sigmas: Option<f64>,
    pass: bool,
    sampled_mean: f64,
    sampled_stderr: f64,
    mode_sigmas: f64,
    modes_agree: bool,
}

pub fn verify(args: &VerifyArgs) -> CliResult<u8> {
    let inputs = Inputs::load(&args.inputs)?;
    let quad = quadrature(&args.quad)?;
    let mut val = Valuation::new(
        &inputs.model,
        &inputs.market,
        &inputs.contract,
        &inputs.loadings,
        quad,
    );
    if let Some(f) = args.fault {
        val = val.with_engine(Engine::with_fault(&inputs.model, fault(f)));
    }
    let report = val.price_va()?;
    let paths = args.mc.paths.unwrap_or(VERIFY_PATHS);
    let mc = simulate_all(&inputs, paths, args.mc.seed)?;

    let closed = [report.premium_leg, report.sb, report.gmab, report.db];
    let rows: Vec<VerifyRow> = Leg::ALL
        .iter()
        .zip(closed)
        .map(|(&leg, cf)| {
            let g = mc.get(leg, McMode::GWeighted);
            let s = mc.get(leg, McMode::SampledTaus);
            let v = compare(cf, &g, args.k_sigma);
            let combined = (g.stderr.powi(2) + s.stderr.powi(2)).sqrt();
            let gap = (g.mean - s.mean).abs();
            let mode_sigmas = if combined > 0.0 { gap / combined } else { 0.0 };
            VerifyRow {
                leg: leg.name(),
                closed_form: cf,
                mc_mean: g.mean,
                mc_stderr: g.stderr,
                sigmas: v.sigmas,
                pass: v.pass,
                sampled_mean: s.mean,
                sampled_stderr: s.stderr,
                mode_sigmas,
                modes_agree: gap <= args.k_sigma * combined + 1e-12 * g.mean.abs().max(1.0),
            }
        })
        .collect();

    println!(
        "{:<12} {:>14} {:>14} {:>10} {:>8} {:>6} {:>14} {:>10} {:>8}",
        "leg",
        "closed_form",
        "mc_mean",
        "stderr",
        "sigmas",
        "pass",
        "sampled_mean",
        "stderr",
        "modes"
    );
    for r in &rows {
        println!(
            "{:<12} {:>14.6} {:>14.6} {:>10.6} {:>8} {:>6} {:>14.6} {:>10.6} {:>8.2}",
            r.leg,
            r.closed_form,
            r.mc_mean,
            r.mc_stderr,
            r.sigmas.map_or("-".to_string(), |s| format!("{s:.2}")),
            if r.pass && r.modes_agree {
                "ok"
            } else {
                "FAIL"
            },
            r.sampled_mean,
            r.sampled_stderr,
            r.mode_sigmas
        );
    }
    println!(
        "{paths} paths, seed {}, threshold {} standard errors",
        args.mc.seed, args.k_sigma
    );
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n";
        write_output(Some(path), &json)?;
    }
    Ok(if rows.iter().all(|r| r.pass && r.modes_agree) {
        0
    } else {
        1
    })
}

fn fault(f: FaultArg) -> Fault {
    match f {
        FaultArg::KappaTerminal => Fault::FlipKappa(KappaBranch::Terminal),
        FaultArg::KappaMiddle => Fault::FlipKappa(KappaBranch::Middle),
        FaultArg::KappaEarly => Fault::FlipKappa(KappaBranch::Early),
        FaultArg::KappaTie => Fault::FlipKappa(KappaBranch::Tie),
        FaultArg::FourierConstant => Fault::FourierConstant,
    }
}

pub fn sweep(args: &SweepArgs) -> CliResult<u8> {
    let base = Inputs::load(&args.inputs)?;
    let quad = quadrature(&args.quad)?;
    if args.steps == 0 || !(args.from.is_finite() && args.to.is_finite()) || args.to < args.from {
        return Err(CliError::Usage(format!(
            "empty sweep range: from {} to {} in {} steps",
            args.from, args.to, args.steps
        )));
    }
    let values: Vec<f64> = if args.steps == 1 {
        vec![args.from]
    } else {
        let h = (args.to - args.from) / (args.steps - 1) as f64;
        (0..args.steps).map(|i| args.from + h * i as f64).collect()
    };

    let name = parameter_name(args.parameter);
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "parameter",
        "value",
        "premium_leg",
        "sb",
        "gmab",
        "db",
        "va_total",
    ];
    w.write_record(header).expect("in-memory write");
    let mut columns: Vec<[f64; 4]> = Vec::new();
    for &x in &values {
        let mut q = quad;
        let inputs = match args.parameter {
            SweepParameter::Delta => Inputs {
                contract: base.contract.with_delta(x),
                ..clone_inputs(&base)
            },
            SweepParameter::PenaltyScale => Inputs {
                contract: base.contract.with_penalty_scale(x)?,
                ..clone_inputs(&base)
            },
            SweepParameter::HazardScaleM => Inputs {
                loadings: base.loadings.with_scales(x, 1.0),
                ..clone_inputs(&base)
            },
            SweepParameter::HazardScaleS => Inputs {
                loadings: base.loadings.with_scales(1.0, x),
                ..clone_inputs(&base)
            },
            SweepParameter::W => {
                q.w = x;
                q.validate()?;
                clone_inputs(&base)
            }
        };
        let r = price_report(&inputs, q, args.mc, args.closed_form_only)?;
        columns.push([r.premium_leg, r.sb, r.gmab, r.db]);
        let row = [r.premium_leg, r.sb, r.gmab, r.db, r.va_total];
        let mut rec = vec![name.to_string(), x.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    write_output(
        args.out.as_deref(),
        &String::from_utf8(bytes).expect("csv is utf-8"),
    )?;

    for (k, leg) in Leg::ALL.iter().enumerate() {
        let col: Vec<f64> = columns.iter().map(|c| c[k]).collect();
        eprintln!("monotone {}: {}", leg.name(), monotonicity(&col));
    }
    Ok(0)
}

fn parameter_name(p: SweepParameter) -> &'static str {
    match p {
        SweepParameter::Delta => "delta",
        SweepParameter::PenaltyScale => "penalty_scale",
        SweepParameter::HazardScaleM => "hazard_scale_m",
        SweepParameter::HazardScaleS => "hazard_scale_s",
        SweepParameter::W => "w",
    }
}

fn clone_inputs(i: &Inputs) -> Inputs {
    Inputs {
        model: i.model.clone(),
        market: i.market.clone(),
        contract: i.contract.clone(),
        loadings: i.loadings.clone(),
    }
}

fn monotonicity(v: &[f64]) -> &'static str {
    let up = v.windows(2).all(|w| w[1] >= w[0]);
    let down = v.windows(2).all(|w| w[1] <= w[0]);
    match (up, down) {
        (true, true) => "constant",
        (true, false) => "nondecreasing",
        (false, true) => "nonincreasing",
        (false, false) => "mixed",
    }
}

pub fn check_martingale(args: &MartingaleArgs) -> CliResult<u8> {
    let (model, market) = load_model(&args.model)?;
    let (ra, rb) = market.martingale_residual(&model)?;
    let residual = rb.iter().fold(ra.abs(), |m, r| m.max(r.abs()));
    let scale = 1.0 + market.a.iter().fold(market.a0.abs(), |m, a| m.max(a.abs()));
    let mut ok = residual <= MARTINGALE_TOL * scale;
    println!(
        "martingale residual {residual:e} (tolerance {:e})",
        MARTINGALE_TOL * scale
    );
    if args.paths > 0 {
        let ensemble = simulate(&model, args.horizon, args.paths, args.seed);
        for (k, est) in mc_stock_ratio(&market, &ensemble)?.iter().enumerate() {
            let v = compare(1.0, est, 4.0);
            ok &= v.pass;
            println!(
                "t={:<3} E[S_t]/S_0 {:.6} +- {:.6} {}",
                k + 1,
                est.mean,
                est.stderr,
                if v.pass { "ok" } else { "FAIL" }
            );
        }
    }
    println!(
        "{}",
        if ok {
            "martingale: ok"
        } else {
            "martingale: FAIL"
        }
    );
    Ok(if ok { 0 } else { 1 })
}
