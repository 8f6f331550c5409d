//! CSV writers. Every writer emits the given comment lines (prefixed with
//! `# `) before the header row.

use std::io::Write;

use crate::ctsd::CtsdTrace;
use crate::error::Result;
use crate::pfm::{DeltaTrain, EventTrace};
use crate::spectral::{SidebandModel, Spectrum};
use crate::spur::{SpurPrediction, SweepPoint};

fn comments<W: Write>(w: &mut W, lines: &[String]) -> Result<()> {
    for l in lines {
        writeln!(w, "# {l}")?;
    }
    Ok(())
}

fn writer<W: Write>(mut w: W, lines: &[String]) -> Result<csv::Writer<W>> {
    comments(&mut w, lines)?;
    Ok(csv::Writer::from_writer(w))
}

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

/// `n, t, y_sd, v, sat_flag, state_1..state_n`.
pub fn write_ctsd_trace<W: Write>(w: W, tr: &CtsdTrace, lines: &[String]) -> Result<()> {
    let mut out = writer(w, lines)?;
    let order = tr.states.first().map_or(0, Vec::len);
    let mut head = vec!["n".to_string(), "t".into(), "y_sd".into(), "v".into(), "sat_flag".into()];
    head.extend((1..=order).map(|i| format!("state_{i}")));
    out.write_record(&head)?;
    for k in 0..tr.len() {
        let mut row = vec![
            (k + 1).to_string(),
            num((k + 1) as f64 * tr.t_s),
            tr.y[k].to_string(),
            num(tr.v[k]),
            u8::from(tr.saturated[k]).to_string(),
        ];
        row.extend(tr.states[k].iter().map(|&s| num(s)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// `n, t, y_pfm, w_pfm_at_sample`.
pub fn write_pfm_trace<W: Write>(w: W, tr: &EventTrace, lines: &[String]) -> Result<()> {
    let mut out = writer(w, lines)?;
    out.write_record(["n", "t", "y_pfm", "w_pfm_at_sample"])?;
    for k in 0..tr.y.len() {
        let wv = tr.snapshots.get(k).map_or(f64::NAN, |s| s.w);
        out.write_record([
            (k + 1).to_string(),
            num((k + 1) as f64 * tr.t_s),
            tr.y[k].to_string(),
            num(wv),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One impulse time per line.
pub fn write_impulse_times<W: Write>(mut w: W, train: &DeltaTrain, lines: &[String]) -> Result<()> {
    comments(&mut w, lines)?;
    for t in &train.times {
        writeln!(w, "{t:.16e}")?;
    }
    w.flush()?;
    Ok(())
}

/// `freq_hz, psd_dbfs`.
pub fn write_spectrum<W: Write>(w: W, s: &Spectrum, lines: &[String]) -> Result<()> {
    let mut out = writer(w, lines)?;
    out.write_record(["freq_hz", "psd_dbfs"])?;
    for (f, p) in s.freq.iter().zip(&s.psd_dbfs) {
        out.write_record([num(*f), num(*p)])?;
    }
    out.flush()?;
    Ok(())
}

/// `q, r, freq, amp, phase`. The DC and signal terms are rows with `q = 0`
/// and `r = 0, 1`.
pub fn write_sidebands<W: Write>(w: W, m: &SidebandModel, lines: &[String]) -> Result<()> {
    let mut out = writer(w, lines)?;
    out.write_record(["q", "r", "freq", "amp", "phase"])?;
    out.write_record(["0".into(), "0".into(), num(0.0), num(m.f0), num(0.0)])?;
    out.write_record([
        "0".into(),
        "1".into(),
        num(m.f_x),
        num(m.signal_amplitude),
        num(m.signal_phase),
    ])?;
    for t in &m.terms {
        out.write_record([
            t.q.to_string(),
            t.r.to_string(),
            num(t.freq),
            num(t.amplitude),
            num(t.phase),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `q, r, f_spur, f_a, amp_dbfs_pred, mechanism`.
pub fn write_spurs<W: Write>(w: W, p: &SpurPrediction, lines: &[String]) -> Result<()> {
    let mut out = writer(w, lines)?;
    out.write_record(["q", "r", "f_spur", "f_a", "amp_dbfs_pred", "mechanism"])?;
    for s in &p.spurs {
        out.write_record([
            s.q.to_string(),
            s.r.to_string(),
            num(s.f_spur),
            num(s.f_a),
            num(s.amp_dbfs_pred),
            s.mechanism.tag().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `amplitude, amplitude_dbfs, sndr_db, equiv_match, coding_limit`.
pub fn write_sweep<W: Write>(w: W, pts: &[SweepPoint], lines: &[String]) -> Result<()> {
    let mut out = writer(w, lines)?;
    out.write_record(["amplitude", "amplitude_dbfs", "sndr_db", "equiv_match", "coding_limit"])?;
    for p in pts {
        out.write_record([
            num(p.amplitude),
            num(p.amplitude_dbfs),
            num(p.sndr_db),
            p.equiv_match.to_string(),
            p.coding_limit.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
