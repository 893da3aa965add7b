use std::path::Path;

use serde::Serialize;

use bsq_core::calculus::parity::THETA;
use bsq_core::evolution::{LedgerTerms, Model, SimState, StepOptions};
use bsq_core::verify::{energy_ledger, run_battery, CheckReport};
use bsq_core::{Frame, Parity, ScalarField};

use crate::config::{self, Config, Overrides};
use crate::io::{self, RunManifest, Writer};
use crate::{lab, Cli, CliError, Command};

pub const VERIFY_REPORT: &str = "verify_report.json";
pub const PROFILE_REPORT: &str = "profile_report.json";
pub const SOLVE_REPORT: &str = "solve_report.json";
pub const LEDGER_CSV: &str = "ledger.csv";
pub const LEDGER_REPORT: &str = "ledger_report.json";

pub fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let ov = Overrides { alpha: cli.alpha, resolution: cli.resolution, seed: cli.seed };
    let cfg = config::load(cli.config.as_deref(), &ov)?;
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Verify => verify(&cfg, out),
        Command::Profile => profile(&cfg, out),
        Command::Solve => solve(&cfg, out),
        Command::Run => run(&cfg, out).map(|_| ()),
        Command::Report { dir } => report(dir.as_deref().unwrap_or(out)),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    pass: bool,
    seed: u64,
    checks: &'a [CheckReport],
}

pub fn verify(cfg: &Config, out: &Path) -> Result<(), CliError> {
    ensure_dir(out)?;
    let checks = run_battery(&cfg.params, &cfg.verify)?;
    let pass = checks.iter().all(|c| c.pass || !c.hard);
    for c in &checks {
        let tag = match (c.pass, c.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "INFO",
        };
        println!("{tag} {:<28} ratio {:.6e} over {} samples", c.name, c.measured_ratio, c.samples);
    }
    io::write_json(&out.join(VERIFY_REPORT), &VerifyReport { pass, seed: cfg.verify.seed, checks: &checks })?;
    if pass {
        Ok(())
    } else {
        let failed: Vec<&str> = checks.iter().filter(|c| c.hard && !c.pass).map(|c| c.name.as_str()).collect();
        Err(CliError::CheckFailed(failed.join(", ")))
    }
}

pub fn profile(cfg: &Config, out: &Path) -> Result<(), CliError> {
    ensure_dir(out)?;
    let p = lab::profile(&cfg.params)?;
    let d = p.grid.descriptor();
    io::write_snapshot(out, "f_star", &p.pack.f_star, d.clone(), 0.0)?;
    io::write_snapshot(out, "phi_f_star", &p.phi_f, d.clone(), 0.0)?;
    io::write_snapshot(out, "f_star_residual", &p.residual, d, 0.0)?;
    io::write_json(&out.join(PROFILE_REPORT), &p.report)?;
    let r = &p.report;
    println!(
        "alpha {} relative H1 residual {:.6e}, U leading-order distance {:.6e}",
        r.alpha, r.relative_residual_h1, r.u_leading_distance
    );
    Ok(())
}

pub fn solve(cfg: &Config, out: &Path) -> Result<(), CliError> {
    ensure_dir(out)?;
    let r = lab::solve(&cfg.params)?;
    io::write_json(&out.join(SOLVE_REPORT), &r)?;
    println!(
        "manufactured error {:.6e} (residual {:.2e}), direct vs split {:.6e}",
        r.manufactured_error, r.manufactured_residual, r.direct_vs_split
    );
    if r.manufactured_residual > r.tol_linear {
        return Err(CliError::CheckFailed(format!("residual {:.3e} above tol_linear", r.manufactured_residual)));
    }
    Ok(())
}

fn options(cfg: &Config) -> StepOptions {
    let r = &cfg.run;
    StepOptions {
        forcing: r.forcing,
        freeze_velocity: r.freeze_velocity,
        lam_rate_override: r.lam_rate_override,
        coupling: r.coupling,
        diffusion: r.diffusion,
        ledger_terms: r.ledger_terms,
    }
}

fn start_state(model: &Model, cfg: &Config) -> Result<SimState, CliError> {
    if cfg.run.zero_initial {
        let theta = ScalarField::zeros(&model.grid, Frame::YBar, THETA);
        let eps = ScalarField::zeros(&model.grid, Frame::Y, Parity::ODD);
        Ok(model.init_from_theta(&theta, &eps)?)
    } else {
        Ok(model.initial_state(cfg.run.seed)?)
    }
}

fn queue_snapshot(w: &mut Writer, step: u64, st: &SimState) -> Result<bool, CliError> {
    let s = st.modulation.s;
    let mut all = true;
    for (name, f) in [("eps", &st.eps), ("xi", &st.xi), ("phi", &st.phi)] {
        all &= w.snapshot(format!("snap_{step:07}_{name}"), f.clone(), s)?;
    }
    Ok(all)
}

/// Runs the simulation and returns the manifest written to `out`.
pub fn run(cfg: &Config, out: &Path) -> Result<RunManifest, CliError> {
    ensure_dir(out)?;
    let model = Model::new(&cfg.params, options(cfg))?;
    let mut state = start_state(&model, cfg)?;
    let descriptor = model.grid.descriptor();
    let mut writer = Writer::spawn(out, descriptor.clone(), cfg.run.snapshot_queue)?;
    writer.row(model.record(&state)?)?;
    let mut stride = cfg.run.snapshot_every as u64;
    if stride > 0 {
        queue_snapshot(&mut writer, 0, &state)?;
    }
    let mut next = stride;
    let mut ledger: Vec<LedgerTerms> = Vec::new();
    let dt = cfg.params.dt;
    let s_end = cfg.params.s_end;
    let s_start = state.modulation.s;
    let mut steps = 0u64;
    while state.modulation.s < s_end - 1e-12 * dt {
        let h = dt.min(s_end - state.modulation.s);
        state = model.imex_step(&state, h)?;
        steps += 1;
        if let Some(r) = state.history.back() {
            writer.row(r.clone())?;
        }
        if cfg.run.ledger_terms {
            ledger.extend(state.ledger.back().copied());
        }
        if stride > 0 && steps >= next {
            if !queue_snapshot(&mut writer, steps, &state)? {
                // back-pressure: thin out snapshots, never rows
                stride *= 2;
            }
            next = steps + stride;
        }
    }
    let dropped = writer.dropped();
    let mut files = writer.finish()?;
    for (name, f) in [("eps", &state.eps), ("xi", &state.xi), ("phi", &state.phi)] {
        let stem = format!("final_{name}");
        io::write_snapshot(out, &stem, f, descriptor.clone(), state.modulation.s)?;
        files.push(format!("{stem}.bin"));
        files.push(format!("{stem}.json"));
    }
    if cfg.run.ledger_terms {
        let p = out.join(LEDGER_CSV);
        let mut w = csv::Writer::from_path(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        for t in &ledger {
            w.serialize(t).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))?;
        files.push(LEDGER_CSV.into());
    }
    let manifest = RunManifest {
        config: serde_json::to_value(cfg).map_err(|e| CliError::Io(e.to_string()))?,
        code_version: env!("CARGO_PKG_VERSION").into(),
        grid: descriptor,
        seed: cfg.run.seed,
        s_start,
        s_end: state.modulation.s,
        steps,
        snapshots_dropped: dropped,
        files: io::inventory(out, &files)?,
    };
    io::write_manifest(out, &manifest)?;
    println!("{steps} steps to s = {}, {} snapshot files dropped", state.modulation.s, dropped);
    Ok(manifest)
}

pub fn report(dir: &Path) -> Result<(), CliError> {
    let csv_path = dir.join(io::CSV_NAME);
    if !csv_path.is_file() {
        return Err(CliError::Io(format!("no {} in {}", io::CSV_NAME, dir.display())));
    }
    if dir.join(io::MANIFEST_NAME).is_file() {
        io::check_manifest(dir)?;
    }
    let rows = io::read_csv(&csv_path)?;
    let lp = dir.join(LEDGER_CSV);
    let terms: Vec<LedgerTerms> = if lp.is_file() {
        let mut rd = csv::Reader::from_path(&lp).map_err(|e| CliError::Io(format!("{}: {e}", lp.display())))?;
        rd.deserialize().collect::<Result<_, _>>().map_err(|e| CliError::Io(format!("{}: {e}", lp.display())))?
    } else {
        Vec::new()
    };
    let rep = energy_ledger(&rows, &terms)?;
    io::write_json(&dir.join(LEDGER_REPORT), &rep)?;
    println!(
        "{} rows, max dE/ds {:.6e}, max dX/ds {:.6e}, kappa {:?}",
        rep.rows, rep.de_ds_max, rep.dx_ds_max, rep.kappa_hat
    );
    Ok(())
}
