//! Command-line surface: each subcommand loads one scenario config, runs a
//! stage (or the closed simulate-analyze loop), and leaves a manifest beside
//! its outputs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 format error,
//! 4 roundtrip criterion failure.

use crate::analysis::{
    build_catalog, close_pair_count, diffusion_stats, dipole_map, pair_statistics, percentile,
    render_superres, scan_centers, MoleculeRecord,
};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::fit::{fit_angle_mixture, fit_lorentzian, fit_saturation, Weighting, DPHI_BIN_WIDTH_DEG};
use crate::formats::{read_smfs, write_smfs, write_traces_csv};
use crate::instrument::{
    simulate_confocal_trace, simulate_polarization_series, simulate_saturation_series,
    simulate_widefield_scan, FrameStack, ScanConfig, ScanMode, ScanTrace,
};
use crate::io::{
    write_catalog_csv, write_ground_truth, write_pgm, GroundTruth,
};
use crate::manifest::RunManifest;
use crate::synthesis::{synthesize, Sample};
use crate::units::{axial_difference, Angle, Power};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "smforge", version, about = "Forward simulation and inverse analysis for single-molecule excitation spectroscopy of dye-doped nanocrystals")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker-thread cap; falls back to SMFORGE_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a sample and render its measurement records.
    Simulate(CommonArgs),
    /// Reconstruct a catalog and statistics from a recorded stack.
    Analyze(CommonArgs),
    /// Simulate, analyze, and compare against ground truth.
    Roundtrip(CommonArgs),
    /// Saturation series and Eq.-1 parameter recovery for one emitter.
    Saturate(CommonArgs),
    /// Polarization series and dipole-angle mixture recovery.
    Dipoles(CommonArgs),
    /// Pair statistics over the ground-truth-derived catalog.
    Pairs(CommonArgs),
    /// Spectral-diffusion statistics over a cohort of emitters.
    Diffusion(CommonArgs),
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::Analyze(a)
            | Command::Roundtrip(a)
            | Command::Saturate(a)
            | Command::Dipoles(a)
            | Command::Pairs(a)
            | Command::Diffusion(a) => a,
        }
    }
}

/// Run a parsed invocation; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let args = cli.command.args();
    let threads = args
        .threads
        .or_else(|| std::env::var("SMFORGE_THREADS").ok().and_then(|v| v.parse().ok()));
    let body = || -> Result<bool> {
        let mut cfg = ScenarioConfig::load(&args.config)?;
        if let Some(seed) = args.seed {
            cfg.seed = seed;
        }
        std::fs::create_dir_all(&args.out)?;
        let run_stage = || dispatch(&cli.command, &cfg, &args.out);
        match threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(vec![format!("thread pool: {e}")]))?
                .install(run_stage),
            None => run_stage(),
        }
    };
    match body() {
        Ok(true) => 0,
        Ok(false) => 4,
        Err(e) => {
            eprintln!("smforge: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: &Command, cfg: &ScenarioConfig, out: &Path) -> Result<bool> {
    match command {
        Command::Simulate(_) => cmd_simulate(cfg, out).map(|_| true),
        Command::Analyze(_) => cmd_analyze(cfg, out).map(|_| true),
        Command::Roundtrip(_) => cmd_roundtrip(cfg, out),
        Command::Saturate(_) => cmd_saturate(cfg, out).map(|_| true),
        Command::Dipoles(_) => cmd_dipoles(cfg, out).map(|_| true),
        Command::Pairs(_) => cmd_pairs(cfg, out).map(|_| true),
        Command::Diffusion(_) => cmd_diffusion(cfg, out).map(|_| true),
    }
}

fn write_output(
    manifest: &mut RunManifest,
    path: &Path,
    write: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    std::fs::write(path, &buf)?;
    manifest.add_output(path)
}

fn target_emitter(sample: &Sample, cfg: &ScenarioConfig) -> Result<u64> {
    match cfg.instrument.target_emitter {
        Some(id) => sample
            .emitter(id)
            .map(|e| e.id)
            .ok_or(Error::UnknownEmitter(id)),
        None => sample
            .emitters()
            .next()
            .map(|e| e.id)
            .ok_or_else(|| Error::domain("sample contains no emitters")),
    }
}

// ---------------------------------------------------------------------------
// simulate / analyze / roundtrip
// ---------------------------------------------------------------------------

pub fn cmd_simulate(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let mut manifest = RunManifest::new("simulate", cfg.seed, cfg)?;
    let sample = synthesize(&cfg.sample, cfg.seed)?;
    let gt = GroundTruth::from_sample(&sample);
    write_output(&mut manifest, &out.join("ground_truth.json"), |b| {
        write_ground_truth(b, &gt)
    })?;

    let mut warnings = Vec::new();
    match cfg.instrument.scan.mode {
        ScanMode::WideField => {
            let (stack, w) =
                simulate_widefield_scan(&sample, &cfg.instrument.scan, &cfg.instrument.camera, cfg.seed)?;
            warnings = w;
            write_output(&mut manifest, &out.join("stack.smfs"), |b| write_smfs(b, &stack))?;
        }
        ScanMode::Confocal => {
            let id = target_emitter(&sample, cfg)?;
            let traces = simulate_confocal_trace(&sample, id, &cfg.instrument.scan, cfg.seed)?;
            write_output(&mut manifest, &out.join("traces.csv"), |b| {
                write_traces_csv(b, &traces)
            })?;
        }
    }

    let summary = json!({
        "command": "simulate",
        "seed": cfg.seed,
        "nanocrystals": sample.nanocrystals.len(),
        "emitters": sample.emitter_count(),
        "warnings": warnings,
    });
    write_output(&mut manifest, &out.join("summary.json"), |b| {
        serde_json::to_writer_pretty(b, &summary).map_err(Error::from)
    })?;
    manifest.write(out)
}

/// Analysis products computed in memory before anything is written, so a
/// malformed input never leaves partial outputs behind.
fn analyze_stack(cfg: &ScenarioConfig, stack: &FrameStack) -> (Vec<MoleculeRecord>, serde_json::Value) {
    let a = &cfg.analysis;
    let catalog = build_catalog(stack, &a.catalog);
    let (pairs, hist) =
        pair_statistics(&catalog, a.pair_max_sep_nm, a.pair_r_bin_nm, a.pair_df_bin_ghz, a.pair_df_max_ghz);
    let close = close_pair_count(&catalog, a.close_pair_r_nm, a.close_pair_df_ghz);
    let summary = json!({
        "command": "analyze",
        "molecules": catalog.len(),
        "ambiguous": catalog.iter().filter(|r| r.is_ambiguous()).count(),
        "pairs_within_max_sep": pairs.len(),
        "close_pairs": close,
        "radial_counts": hist.radial_counts,
        "radial_corrected": hist.radial_corrected,
    });
    (catalog, summary)
}

pub fn cmd_analyze(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let stack_path = out.join("stack.smfs");
    let bytes = std::fs::read(&stack_path)?;
    let stack = read_smfs(&mut bytes.as_slice(), cfg.instrument.camera.clone())?;

    let mut manifest = RunManifest::new("analyze", cfg.seed, cfg)?;
    let (catalog, summary) = analyze_stack(cfg, &stack);
    let a = &cfg.analysis;
    let (pairs, _) =
        pair_statistics(&catalog, a.pair_max_sep_nm, a.pair_r_bin_nm, a.pair_df_bin_ghz, a.pair_df_max_ghz);

    write_output(&mut manifest, &out.join("catalog.csv"), |b| write_catalog_csv(b, &catalog))?;
    if !catalog.is_empty() {
        let img = render_superres(&catalog, a.superres_pixel_nm);
        write_output(&mut manifest, &out.join("superres.pgm"), |b| write_pgm(b, &img))?;
    }
    write_output(&mut manifest, &out.join("pairs.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["id_a", "id_b", "distance_nm", "detuning_ghz"])?;
        for p in &pairs {
            w.write_record([
                p.id_a.to_string(),
                p.id_b.to_string(),
                format!("{:.4}", p.distance_nm),
                format!("{:.6}", p.detuning_ghz),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_output(&mut manifest, &out.join("summary.json"), |b| {
        serde_json::to_writer_pretty(b, &summary).map_err(Error::from)
    })?;
    manifest.write(out)
}

/// Match each ground-truth emitter to the nearest catalog record within
/// 50 nm and 3 gamma; greedy on distance, one-to-one.
fn match_to_truth<'a>(
    gt: &'a GroundTruth,
    catalog: &'a [MoleculeRecord],
) -> Vec<(&'a crate::io::GroundTruthRecord, &'a MoleculeRecord)> {
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for (i, t) in gt.emitters.iter().enumerate() {
        for (j, r) in catalog.iter().enumerate() {
            let d = ((t.x_nm - r.position.x_nm).powi(2) + (t.y_nm - r.position.y_nm).powi(2)).sqrt();
            let df = (t.f0_thz * 1e6 - r.f0.mhz()).abs();
            if d <= 50.0 && df <= 3.0 * r.gamma_mhz.max(1.0) {
                edges.push((d, i, j));
            }
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used_t = vec![false; gt.emitters.len()];
    let mut used_r = vec![false; catalog.len()];
    let mut matched = Vec::new();
    for (_, i, j) in edges {
        if !used_t[i] && !used_r[j] {
            used_t[i] = true;
            used_r[j] = true;
            matched.push((&gt.emitters[i], &catalog[j]));
        }
    }
    matched
}

pub fn cmd_roundtrip(cfg: &ScenarioConfig, out: &Path) -> Result<bool> {
    if cfg.instrument.scan.mode != ScanMode::WideField {
        return Err(Error::Config(vec![
            "roundtrip needs a wide-field scan configuration".into(),
        ]));
    }
    let mut manifest = RunManifest::new("roundtrip", cfg.seed, cfg)?;
    let sample = synthesize(&cfg.sample, cfg.seed)?;
    let gt = GroundTruth::from_sample(&sample);
    let (stack, _) =
        simulate_widefield_scan(&sample, &cfg.instrument.scan, &cfg.instrument.camera, cfg.seed)?;
    let catalog = build_catalog(&stack, &cfg.analysis.catalog);
    let matched = match_to_truth(&gt, &catalog);

    let noiseless = !cfg.instrument.scan.shot_noise && cfg.instrument.camera.background == 0.0;
    let pos_tol = if noiseless { 2.0 } else { 25.0 };
    let gamma_tol = if noiseless { 0.05 } else { 0.25 };
    let recall = matched.len() as f64 / gt.emitters.len().max(1) as f64;
    let pos_errs: Vec<f64> = matched
        .iter()
        .map(|(t, r)| ((t.x_nm - r.position.x_nm).powi(2) + (t.y_nm - r.position.y_nm).powi(2)).sqrt())
        .collect();
    let gamma_relerr: Vec<f64> = matched
        .iter()
        .map(|(t, r)| {
            let expect = crate::photophysics::broadened_linewidth(
                Power::from_nw(
                    cfg.instrument.scan.power.nw()
                        * crate::photophysics::polarization_factor(
                            Angle::wrap(t.phi_deg),
                            cfg.instrument.scan.theta_exc,
                        ),
                ),
                &sample.emitter(t.id).unwrap().params,
            );
            (r.gamma_mhz - expect).abs() / expect
        })
        .collect();
    let med = |v: &[f64]| if v.is_empty() { f64::NAN } else { percentile(v, 50.0) };

    let checks = vec![
        ("recall", recall, 0.95, recall >= 0.95),
        ("median_position_error_nm", med(&pos_errs), pos_tol, med(&pos_errs) <= pos_tol),
        ("median_gamma_rel_error", med(&gamma_relerr), gamma_tol, med(&gamma_relerr) <= gamma_tol),
    ];
    let mut all_pass = true;
    let mut lines = Vec::new();
    for (name, value, bound, pass) in &checks {
        all_pass &= pass;
        let verdict = if *pass { "PASS" } else { "FAIL" };
        let line = format!("{verdict} {name}: measured {value:.6} vs bound {bound:.6}");
        println!("{line}");
        lines.push(line);
    }

    write_output(&mut manifest, &out.join("catalog.csv"), |b| write_catalog_csv(b, &catalog))?;
    write_output(&mut manifest, &out.join("report.json"), |b| {
        let report = json!({
            "command": "roundtrip",
            "emitters": gt.emitters.len(),
            "matched": matched.len(),
            "checks": lines,
            "pass": all_pass,
        });
        serde_json::to_writer_pretty(b, &report).map_err(Error::from)
    })?;
    manifest.write(out)?;
    Ok(all_pass)
}

// ---------------------------------------------------------------------------
// stage commands
// ---------------------------------------------------------------------------

pub fn cmd_saturate(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let mut manifest = RunManifest::new("saturate", cfg.seed, cfg)?;
    let sample = synthesize(&cfg.sample, cfg.seed)?;
    let id = target_emitter(&sample, cfg)?;
    let powers: Vec<Power> = if cfg.instrument.powers_nw.is_empty() {
        [0.17, 1.6, 6.6, 95.0].iter().map(|&p| Power::from_nw(p)).collect()
    } else {
        cfg.instrument.powers_nw.iter().map(|&p| Power::from_nw(p)).collect()
    };
    let series = simulate_saturation_series(&sample, id, &powers, &cfg.instrument.scan, cfg.seed)?;

    let mut p_nw = Vec::new();
    let mut peaks = Vec::new();
    let mut widths = Vec::new();
    let mut traces: Vec<ScanTrace> = Vec::new();
    for (q, (p, trace)) in series.iter().enumerate() {
        let f: Vec<f64> = trace.freq.iter().map(|x| x.mhz()).collect();
        let y: Vec<f64> = trace.rate.iter().map(|r| r.kcps()).collect();
        let fit = fit_lorentzian(&f, &y, Weighting::PoissonLike, None);
        if fit.converged {
            p_nw.push(p.nw());
            peaks.push(fit.params[2]);
            widths.push(fit.params[1]);
        }
        traces.push(ScanTrace { rep_index: q as u32, ..trace.clone() });
    }
    let sat = fit_saturation(&p_nw, &peaks, &widths);

    write_output(&mut manifest, &out.join("traces.csv"), |b| write_traces_csv(b, &traces))?;
    write_output(&mut manifest, &out.join("summary.json"), |b| {
        let summary = json!({
            "command": "saturate",
            "emitter": id,
            "powers_nw": p_nw,
            "peak_rates_kcps": peaks,
            "linewidths_mhz": widths,
            "fit": sat,
        });
        serde_json::to_writer_pretty(b, &summary).map_err(Error::from)
    })?;
    manifest.write(out)
}

pub fn cmd_dipoles(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let mut manifest = RunManifest::new("dipoles", cfg.seed, cfg)?;
    let sample = synthesize(&cfg.sample, cfg.seed)?;
    let angles: Vec<Angle> = if cfg.instrument.polarization_angles_deg.is_empty() {
        (0..10).map(|k| Angle::wrap(k as f64 * 18.0)).collect()
    } else {
        cfg.instrument.polarization_angles_deg.iter().map(|&d| Angle::wrap(d)).collect()
    };
    let stacks = simulate_polarization_series(
        &sample,
        &angles,
        &cfg.instrument.scan,
        &cfg.instrument.camera,
        cfg.seed,
    )?;
    // Detect on the angle-summed stack: summing cos^2 over evenly spaced
    // polarizations is orientation-independent, so molecules dark at any one
    // angle still make it into the catalog.
    let mut summed = stacks[0].clone();
    for stack in &stacks[1..] {
        for (dst, src) in summed.frames.iter_mut().zip(&stack.frames) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    let mut catalog = build_catalog(&summed, &cfg.analysis.catalog);
    dipole_map(&mut catalog, &stacks, cfg.analysis.catalog.roi_half_px)?;

    // attribute records to nanocrystals by position
    for rec in catalog.iter_mut() {
        rec.nc_id = sample
            .nanocrystals
            .iter()
            .find(|nc| nc.center.distance_to(rec.position) <= nc.radius_nm * 1.5)
            .map(|nc| nc.id);
    }

    // within-NC |delta phi| histogram and mixture fit
    let nbins = (90.0 / DPHI_BIN_WIDTH_DEG) as usize;
    let mut counts = vec![0.0f64; nbins];
    let with_phi: Vec<&MoleculeRecord> =
        catalog.iter().filter(|r| r.phi.is_some() && r.nc_id.is_some()).collect();
    for (i, a) in with_phi.iter().enumerate() {
        for b in &with_phi[i + 1..] {
            if a.nc_id != b.nc_id {
                continue;
            }
            let d = axial_difference(a.phi.unwrap(), b.phi.unwrap()).degrees().abs();
            let bin = ((d / DPHI_BIN_WIDTH_DEG) as usize).min(nbins - 1);
            counts[bin] += 1.0;
        }
    }
    let mixture = fit_angle_mixture(&counts, DPHI_BIN_WIDTH_DEG);

    write_output(&mut manifest, &out.join("catalog.csv"), |b| write_catalog_csv(b, &catalog))?;
    write_output(&mut manifest, &out.join("summary.json"), |b| {
        let summary = json!({
            "command": "dipoles",
            "angles_deg": angles.iter().map(|a| a.degrees()).collect::<Vec<_>>(),
            "molecules_with_phi": with_phi.len(),
            "dphi_counts": counts,
            "mixture_fit": mixture,
        });
        serde_json::to_writer_pretty(b, &summary).map_err(Error::from)
    })?;
    manifest.write(out)
}

pub fn cmd_pairs(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let mut manifest = RunManifest::new("pairs", cfg.seed, cfg)?;
    let sample = synthesize(&cfg.sample, cfg.seed)?;
    // ground-truth-derived catalog: exact positions, declared PDF width
    let catalog: Vec<MoleculeRecord> = sample
        .emitters()
        .map(|e| MoleculeRecord {
            id: e.id,
            nc_id: Some(e.nc_id),
            position: e.pos,
            position_sigma_nm: cfg.analysis.assumed_sigma_nm,
            f0: e.params.f0,
            gamma_mhz: e.params.gamma0_mhz,
            phi: Some(e.params.phi),
            site: e.params.site,
            flags: vec![],
        })
        .collect();
    let a = &cfg.analysis;
    let (pairs, hist) =
        pair_statistics(&catalog, a.pair_max_sep_nm, a.pair_r_bin_nm, a.pair_df_bin_ghz, a.pair_df_max_ghz);
    let close = close_pair_count(&catalog, a.close_pair_r_nm, a.close_pair_df_ghz);

    write_output(&mut manifest, &out.join("pairs.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["id_a", "id_b", "distance_nm", "detuning_ghz"])?;
        for p in &pairs {
            w.write_record([
                p.id_a.to_string(),
                p.id_b.to_string(),
                format!("{:.4}", p.distance_nm),
                format!("{:.6}", p.detuning_ghz),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_output(&mut manifest, &out.join("pair_hist.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["r_bin_lo_nm", "raw_count", "corrected_density"])?;
        for (i, (&c, &d)) in hist.radial_counts.iter().zip(&hist.radial_corrected).enumerate() {
            w.write_record([
                format!("{:.2}", i as f64 * hist.r_bin_nm),
                c.to_string(),
                format!("{d:.8}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_output(&mut manifest, &out.join("summary.json"), |b| {
        let summary = json!({
            "command": "pairs",
            "molecules": catalog.len(),
            "pairs_within_max_sep": pairs.len(),
            "close_pairs": close,
        });
        serde_json::to_writer_pretty(b, &summary).map_err(Error::from)
    })?;
    manifest.write(out)
}

pub fn cmd_diffusion(cfg: &ScenarioConfig, out: &Path) -> Result<()> {
    let mut manifest = RunManifest::new("diffusion", cfg.seed, cfg)?;
    let sample = synthesize(&cfg.sample, cfg.seed)?;
    let scan = ScanConfig { mode: ScanMode::Confocal, ..cfg.instrument.scan.clone() };
    let cohort: Vec<u64> = {
        let ids: Vec<u64> = sample.emitters().map(|e| e.id).collect();
        match cfg.instrument.diffusion_cohort {
            0 => ids,
            n => ids.into_iter().take(n).collect(),
        }
    };

    let mut stats = Vec::new();
    for id in &cohort {
        let traces = simulate_confocal_trace(&sample, *id, &scan, cfg.seed)?;
        let centers = scan_centers(&traces);
        if centers.len() < 2 {
            continue;
        }
        // the per-scan linewidth at the measurement power
        let e = sample.emitter(*id).unwrap();
        let gamma = crate::photophysics::broadened_linewidth(
            Power::from_nw(
                scan.power.nw()
                    * crate::photophysics::polarization_factor(e.params.phi, scan.theta_exc),
            ),
            &e.params,
        );
        stats.push(diffusion_stats(*id, &centers, gamma)?);
    }
    if stats.is_empty() {
        return Err(Error::domain("no emitter produced enough fitted scans"));
    }
    let sigmas: Vec<f64> = stats.iter().map(|s| s.sigma_f_mhz).collect();
    let ranges: Vec<f64> = stats.iter().map(|s| s.normalized_range).collect();

    write_output(&mut manifest, &out.join("diffusion.csv"), |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["molecule_id", "sigma_f_mhz", "gamma_mhz", "normalized_range", "n_scans"])?;
        for s in &stats {
            w.write_record([
                s.molecule_id.to_string(),
                format!("{:.4}", s.sigma_f_mhz),
                format!("{:.4}", s.gamma_mhz),
                format!("{:.4}", s.normalized_range),
                s.n_scans.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_output(&mut manifest, &out.join("summary.json"), |b| {
        let summary = json!({
            "command": "diffusion",
            "molecules": stats.len(),
            "sigma_f_mhz": {
                "median": percentile(&sigmas, 50.0),
                "p25": percentile(&sigmas, 25.0),
                "p75": percentile(&sigmas, 75.0),
            },
            "normalized_range": {
                "median": percentile(&ranges, 50.0),
                "p25": percentile(&ranges, 25.0),
                "p75": percentile(&ranges, 75.0),
            },
        });
        serde_json::to_writer_pretty(b, &summary).map_err(Error::from)
    })?;
    manifest.write(out)
}
