//! Subcommand implementations.

use std::path::{Path, PathBuf};

use pfmsd_core::export::{
    write_ctsd_trace, write_impulse_times, write_pfm_trace, write_sidebands, write_spectrum,
    write_spurs, write_sweep,
};
use pfmsd_core::pfm::{run_pfm_equivalent_with, PfmOptions};
use pfmsd_core::spectral::{dense_pulse, levels};
use pfmsd_core::{
    build_pfm_equivalent, compare_outputs, decompose_noise, detect_coding_limit, periodogram,
    predict_spurs, run_ctsd, sideband_series, sweep_dynamic_range, CtsdTrace, EventTrace,
    MatchReport, OverloadReport, PfmEquivalentSpec, Window,
};
use serde::Serialize;

use crate::config::{check_pow2, Analysis, ExperimentConfig, SidebandOptions, SpurOptions};
use crate::output::OutDir;
use crate::{Cli, CliError, Command};

const DEFAULT_OUT: &str = "pfmsd-out";
const MAX_DEFAULT_NFFT: usize = 1 << 16;

struct Ctx {
    cfg: ExperimentConfig,
    hash: String,
    out: OutDir,
}

impl Ctx {
    fn pfm_options(&self, dense: bool) -> PfmOptions {
        let mut o = PfmOptions::default();
        if let Some(k) = self.cfg.substeps {
            o.substeps = k;
        }
        if dense {
            o.dense_per_sample = self.cfg.dense_per_sample;
        }
        o
    }

    fn equivalent(&self) -> Result<PfmEquivalentSpec, CliError> {
        Ok(build_pfm_equivalent(&self.cfg.loop_spec)?)
    }

    fn ctsd(&self) -> Result<CtsdTrace, CliError> {
        Ok(run_ctsd(&self.cfg.loop_spec, &self.cfg.input, self.cfg.n)?)
    }

    fn pfm(&self, eq: &PfmEquivalentSpec, dense: bool) -> Result<EventTrace, CliError> {
        let opts = self.pfm_options(dense);
        Ok(run_pfm_equivalent_with(eq, &self.cfg.input, self.cfg.n, &opts)?)
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Compare {
        traces: Some(paths),
    } = &cli.command
    {
        return compare_traces(&paths[0], &paths[1], cli.out.clone());
    }
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::usage("--config <path> is required"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(n) = cli.nfft {
        cfg.nfft = Some(n);
    }
    if let Some(k) = cli.substeps {
        cfg.substeps = Some(k);
    }
    // the output location is not part of the experiment
    let root = cli
        .out
        .clone()
        .or_else(|| cfg.out.take())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    cfg.validate()?;
    let hash = cfg.sha256()?;
    let header = vec![
        format!("config_sha256={hash}"),
        format!("generator=pfmsd {}", env!("CARGO_PKG_VERSION")),
    ];
    let out = OutDir::create(root, header)?;
    let canonical = cfg.canonical_json()?;
    out.write("config.json", |w| {
        std::io::Write::write_all(w, canonical.as_bytes()).map_err(|e| CliError::runtime(e.to_string()))
    })?;
    let ctx = Ctx { cfg, hash, out };
    match &cli.command {
        Command::Simulate => simulate(&ctx),
        Command::Compare { .. } => compare(&ctx).map(|_| ()),
        Command::Spurs => spurs(&ctx),
        Command::SweepDr => sweep(&ctx),
        Command::Sidebands => sidebands(&ctx),
        Command::Spectrum => spectrum(&ctx, None),
    }
}

#[derive(Serialize)]
struct MatchFile<'a> {
    config_sha256: Option<&'a str>,
    report: &'a MatchReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    coding_limit: Option<&'a OverloadReport>,
}

fn summary(r: &MatchReport) -> String {
    match r.first_mismatch {
        None => format!("EXACT MATCH ({} samples)", r.n_samples),
        Some(i) => format!(
            "MISMATCH at sample {} ({} of {} samples differ)",
            i + 1,
            r.mismatch_count,
            r.n_samples
        ),
    }
}

fn report_match(ctx: &Ctx, ctsd: &CtsdTrace, pfm: &EventTrace) -> Result<MatchReport, CliError> {
    let report = compare_outputs(&ctsd.y, &pfm.y)?;
    let limit = detect_coding_limit(pfm, &ctx.cfg.loop_spec.quantizer);
    ctx.out.write_json(
        "match.json",
        &MatchFile {
            config_sha256: Some(&ctx.hash),
            report: &report,
            coding_limit: Some(&limit),
        },
    )?;
    println!("{}", summary(&report));
    if let (Some(t), Some(n)) = (limit.time, limit.sample) {
        println!("coding limit exceeded at t = {t} (sample {n})");
    }
    Ok(report)
}

fn write_csv<F>(ctx: &Ctx, name: &str, f: F) -> Result<PathBuf, CliError>
where
    F: FnOnce(&mut dyn std::io::Write, &[String]) -> pfmsd_core::Result<()>,
{
    ctx.out.write(name, |w| Ok(f(w, ctx.out.header())?))
}

fn simulate(ctx: &Ctx) -> Result<(), CliError> {
    let ctsd = ctx.ctsd()?;
    let eq = ctx.equivalent()?;
    let pfm = ctx.pfm(&eq, ctx.cfg.dense_per_sample.is_some())?;
    write_csv(ctx, "ctsd_trace.csv", |w, h| write_ctsd_trace(w, &ctsd, h))?;
    write_csv(ctx, "pfm_trace.csv", |w, h| write_pfm_trace(w, &pfm, h))?;
    write_csv(ctx, "impulse_times.csv", |w, h| write_impulse_times(w, &pfm.train, h))?;
    report_match(ctx, &ctsd, &pfm)?;
    for a in &ctx.cfg.analyses {
        match a {
            Analysis::Compare => {}
            Analysis::Spectra => spectrum(ctx, Some((&ctsd, &pfm, &eq)))?,
            Analysis::Spurs => spurs(ctx)?,
            Analysis::Sweep => sweep(ctx)?,
            Analysis::Sidebands => sidebands(ctx)?,
        }
    }
    Ok(())
}

fn compare(ctx: &Ctx) -> Result<MatchReport, CliError> {
    let ctsd = ctx.ctsd()?;
    let pfm = ctx.pfm(&ctx.equivalent()?, false)?;
    report_match(ctx, &ctsd, &pfm)
}

fn read_output_column(path: &Path) -> Result<Vec<u32>, CliError> {
    let bad = |e: &dyn std::fmt::Display| CliError::usage(format!("{}: {e}", path.display()));
    let mut rd = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| bad(&e))?;
    let headers = rd.headers().map_err(|e| bad(&e))?.clone();
    let col = headers
        .iter()
        .position(|h| h == "y_sd" || h == "y_pfm")
        .ok_or_else(|| bad(&"no y_sd or y_pfm column"))?;
    let mut y = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| bad(&e))?;
        y.push(rec[col].trim().parse::<u32>().map_err(|e| bad(&e))?);
    }
    Ok(y)
}

fn compare_traces(a: &Path, b: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let report = compare_outputs(&read_output_column(a)?, &read_output_column(b)?)?;
    if let Some(root) = out {
        OutDir::create(root, Vec::new())?.write_json(
            "match.json",
            &MatchFile {
                config_sha256: None,
                report: &report,
                coding_limit: None,
            },
        )?;
    }
    println!("{}", summary(&report));
    Ok(())
}

fn spurs(ctx: &Ctx) -> Result<(), CliError> {
    let SpurOptions { q_max, r_max } = ctx.cfg.spurs.clone().unwrap_or(SpurOptions {
        q_max: 4,
        r_max: 3,
    });
    let p = predict_spurs(&ctx.equivalent()?, &ctx.cfg.input, q_max, r_max)?;
    write_csv(ctx, "spurs.csv", |w, h| write_spurs(w, &p, h))?;
    println!("f0 = {}, f_x = {}, {} spurs", p.f0, p.f_x, p.spurs.len());
    for s in &p.spurs {
        println!(
            "  ({}, {:+}) f_a = {:.6} {:8.2} dBFS  {}",
            s.q,
            s.r,
            s.f_a,
            s.amp_dbfs_pred,
            s.mechanism.tag()
        );
    }
    Ok(())
}

fn sidebands(ctx: &Ctx) -> Result<(), CliError> {
    let SidebandOptions { q_max, r_max } = ctx.cfg.sidebands.clone().unwrap_or(SidebandOptions {
        q_max: 20,
        r_max: None,
    });
    let spec = &ctx.cfg.loop_spec;
    let m = sideband_series(&ctx.cfg.input, &spec.quantizer, spec.t_m(), q_max, r_max)?;
    write_csv(ctx, "sidebands.csv", |w, h| write_sidebands(w, &m, h))?;
    println!(
        "f0 = {}, beta = {}, signal term {}, {} side-band terms",
        m.f0,
        m.beta,
        m.signal_amplitude,
        m.terms.len()
    );
    Ok(())
}

fn sweep(ctx: &Ctx) -> Result<(), CliError> {
    let opts = ctx
        .cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::usage("the config has no sweep section"))?;
    let f_x = match (opts.f_x, ctx.cfg.input.tones.first()) {
        (Some(f), _) => f,
        (None, Some(t)) => t.frequency,
        (None, None) => return Err(CliError::usage("sweep needs f_x or an input tone")),
    };
    let x_dc = ctx.cfg.loop_spec.midscale_input();
    let amplitudes = match (&opts.amplitudes, opts.dbfs_range) {
        (Some(a), None) => a.clone(),
        (None, Some([from, to, step])) => {
            if !(step > 0.0) || !(to >= from) {
                return Err(CliError::usage("dbfs_range must be [from, to, step] with step > 0"));
            }
            let count = ((to - from) / step + 1e-9).floor() as usize + 1;
            (0..count)
                .map(|k| x_dc * 10f64.powf((from + k as f64 * step) / 20.0))
                .collect()
        }
        _ => {
            return Err(CliError::usage(
                "sweep needs exactly one of amplitudes or dbfs_range",
            ))
        }
    };
    let pts = sweep_dynamic_range(&ctx.cfg.loop_spec, f_x, &amplitudes, opts.osr, ctx.cfg.n)?;
    write_csv(ctx, "sweep.csv", |w, h| write_sweep(w, &pts, h))?;
    let best = pts
        .iter()
        .filter(|p| p.sndr_db.is_finite())
        .max_by(|a, b| a.sndr_db.total_cmp(&b.sndr_db));
    if let Some(b) = best {
        println!("peak SNDR {:.2} dB at amplitude {}", b.sndr_db, b.amplitude);
    }
    match pts.iter().find(|p| !p.equiv_match) {
        Some(p) => println!("first mismatch at amplitude {}", p.amplitude),
        None => println!("all {} amplitudes match", pts.len()),
    }
    Ok(())
}

fn spectrum(
    ctx: &Ctx,
    runs: Option<(&CtsdTrace, &EventTrace, &PfmEquivalentSpec)>,
) -> Result<(), CliError> {
    let n = ctx.cfg.n;
    let nfft = ctx.cfg.nfft.unwrap_or_else(|| prev_pow2(n.min(MAX_DEFAULT_NFFT)));
    check_pow2("nfft", nfft)?;
    if nfft > n {
        return Err(CliError::usage(format!("nfft {nfft} exceeds the run length {n}")));
    }
    match runs {
        Some((ctsd, pfm, eq)) => {
            output_spectrum(ctx, ctsd, nfft)?;
            dense_spectra(ctx, ctsd, pfm, eq, nfft)
        }
        None => {
            let ctsd = ctx.ctsd()?;
            output_spectrum(ctx, &ctsd, nfft)?;
            if ctx.cfg.dense_per_sample.is_none() {
                return Ok(());
            }
            let eq = ctx.equivalent()?;
            let pfm = ctx.pfm(&eq, true)?;
            dense_spectra(ctx, &ctsd, &pfm, &eq, nfft)
        }
    }
}

/// Aliasing error, pulse-shaper output and side-band spectra on the dense
/// grid.
fn dense_spectra(
    ctx: &Ctx,
    ctsd: &CtsdTrace,
    pfm: &EventTrace,
    eq: &PfmEquivalentSpec,
    nfft: usize,
) -> Result<(), CliError> {
    let Some(k) = ctx.cfg.dense_per_sample else {
        return Ok(());
    };
    let full_scale = ctx.cfg.loop_spec.quantizer.full_scale_levels();
    let dense_nfft = prev_pow2((nfft * k).min(ctx.cfg.n * k));
    let dec = decompose_noise(ctsd, pfm, eq, &ctx.cfg.input, dense_nfft)?;
    let e_al = dec.e_al_spectrum(full_scale, Window::Hann, dense_nfft)?;
    write_csv(ctx, "spectrum_e_al.csv", |w, h| write_spectrum(w, &e_al, h))?;
    let p = periodogram(
        &dense_pulse(pfm, k),
        dec.dense_rate,
        full_scale,
        Window::Hann,
        dense_nfft,
    )?;
    write_csv(ctx, "spectrum_p.csv", |w, h| write_spectrum(w, &p, h))?;
    write_csv(ctx, "spectrum_m_lf.csv", |w, h| write_spectrum(w, &dec.m_lf, h))?;
    write_csv(ctx, "spectrum_m_hf.csv", |w, h| write_spectrum(w, &dec.m_hf, h))?;
    Ok(())
}

fn output_spectrum(ctx: &Ctx, ctsd: &CtsdTrace, nfft: usize) -> Result<(), CliError> {
    let full_scale = ctx.cfg.loop_spec.quantizer.full_scale_levels();
    let s = periodogram(
        &levels(&ctsd.y),
        ctx.cfg.loop_spec.f_s,
        full_scale,
        Window::Hann,
        nfft,
    )?;
    write_csv(ctx, "spectrum.csv", |w, h| write_spectrum(w, &s, h))?;
    println!("spectrum: {} bins, {} segments", s.freq.len(), s.segments);
    Ok(())
}

fn prev_pow2(v: usize) -> usize {
    if v == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - v.leading_zeros())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prev_pow2_examples() {
        assert_eq!(prev_pow2(1), 1);
        assert_eq!(prev_pow2(1000), 512);
        assert_eq!(prev_pow2(1024), 1024);
    }

    #[test]
    fn summary_lines() {
        let r = compare_outputs(&[1, 2, 3], &[1, 2, 3]).unwrap();
        assert_eq!(summary(&r), "EXACT MATCH (3 samples)");
        let r = compare_outputs(&[1, 2, 3], &[1, 0, 0]).unwrap();
        assert_eq!(summary(&r), "MISMATCH at sample 2 (2 of 3 samples differ)");
    }
}
