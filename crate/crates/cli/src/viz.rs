//! Static SVG output: transferability over demonstration paths, and sweep
//! summaries.

use std::collections::BTreeMap;
use std::fmt::Write;

use anyhow::{bail, Result};

use oodil::demos::Corpus;
use oodil::envs::{DrivingConfig, OBSTACLE_Y};
use oodil::transfer::TransitionWeight;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 20.0;
const LEGEND: f64 = 90.0;
const LIGHT: [f64; 3] = [222.0, 235.0, 247.0];
const DARK: [f64; 3] = [8.0, 48.0, 107.0];

/// Light-to-dark blue; darker means more transferable.
pub fn color(w: f64) -> String {
    let t = w.clamp(0.0, 1.0);
    let c: Vec<u8> = LIGHT
        .iter()
        .zip(DARK)
        .map(|(a, b)| (a + (b - a) * t).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn px(x: f64) -> f64 {
    MARGIN + x * SIZE
}

fn py(y: f64) -> f64 {
    MARGIN + (1.0 - y) * SIZE
}

/// Mean transition weight per trajectory. Every transition of every
/// trajectory needs exactly one weight, and no weight may be left over.
pub fn mean_weights(corpus: &Corpus, weights: &[TransitionWeight]) -> Result<BTreeMap<u64, f64>> {
    let mut by: BTreeMap<u64, Vec<Option<f64>>> = corpus
        .trajectories()
        .iter()
        .map(|t| (t.id, vec![None; t.len()]))
        .collect();
    for w in weights {
        let Some(slots) = by.get_mut(&w.trajectory_id) else {
            bail!("weights name trajectory {} which is not in the demonstrations", w.trajectory_id);
        };
        match slots.get_mut(w.t) {
            Some(slot @ None) => *slot = Some(w.w),
            Some(Some(_)) => bail!("duplicate weight for trajectory {} step {}", w.trajectory_id, w.t),
            None => bail!("trajectory {} has no transition {}", w.trajectory_id, w.t),
        }
    }
    by.into_iter()
        .map(|(id, slots)| {
            let vals: Option<Vec<f64>> = slots.into_iter().collect();
            match vals {
                Some(v) if !v.is_empty() => Ok((id, v.iter().sum::<f64>() / v.len() as f64)),
                Some(_) => Ok((id, 0.0)),
                None => bail!("trajectory {id} is missing transition weights"),
            }
        })
        .collect()
}

/// Target obstacles plus every demonstration path, colored by its mean
/// transferability, with a color-scale legend.
pub fn transferability_svg(corpus: &Corpus, weights: &[TransitionWeight], target: &DrivingConfig) -> Result<String> {
    let means = mean_weights(corpus, weights)?;
    let (w, h) = (SIZE + 2.0 * MARGIN + LEGEND, SIZE + 2.0 * MARGIN);
    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#)?;
    writeln!(s, r#"<rect x="{m}" y="{m}" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>"#, m = MARGIN)?;
    for (lo, hi) in target.obstacles() {
        writeln!(
            s,
            r##"<rect class="obstacle" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#888888"/>"##,
            px(lo),
            py(OBSTACLE_Y.1),
            (hi - lo) * SIZE,
            (OBSTACLE_Y.1 - OBSTACLE_Y.0) * SIZE
        )?;
    }
    // lighter paths first so the transferable ones stay visible on top
    let mut order: Vec<_> = corpus.trajectories().iter().collect();
    order.sort_by(|a, b| means[&a.id].total_cmp(&means[&b.id]).then(a.id.cmp(&b.id)));
    for traj in order {
        let m = means[&traj.id];
        let points: Vec<String> = traj
            .states
            .iter()
            .map(|st| format!("{:.2},{:.2}", px(st[0]), py(st[1].min(1.0))))
            .collect();
        writeln!(
            s,
            r#"<polyline data-id="{}" data-w="{m:.6}" points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
            traj.id,
            points.join(" "),
            color(m)
        )?;
    }
    let lx = SIZE + 2.0 * MARGIN + 10.0;
    writeln!(s, r#"<defs><linearGradient id="scale" x1="0" y1="1" x2="0" y2="0">"#)?;
    writeln!(s, r#"<stop offset="0" stop-color="{}"/><stop offset="1" stop-color="{}"/>"#, color(0.0), color(1.0))?;
    writeln!(s, "</linearGradient></defs>")?;
    writeln!(s, r#"<rect x="{lx}" y="{MARGIN}" width="20" height="{SIZE}" fill="url(#scale)" stroke="black"/>"#)?;
    writeln!(s, r#"<text x="{}" y="{}" font-size="12">w = 1</text>"#, lx + 24.0, MARGIN + 10.0)?;
    writeln!(s, r#"<text x="{}" y="{}" font-size="12">w = 0</text>"#, lx + 24.0, MARGIN + SIZE)?;
    writeln!(s, "</svg>")?;
    Ok(s)
}

/// One sweep point: the axis value with mean and standard deviation of the
/// final return over seeds.
pub struct SweepPoint {
    pub value: f64,
    pub mean: f64,
    pub std: f64,
}

/// Mean ± std of final return against the swept value, on evenly spaced
/// categories.
pub fn sweep_svg(axis: &str, points: &[SweepPoint]) -> Result<String> {
    let (w, h) = (520.0, 360.0);
    let (left, right, top, bottom) = (70.0, 20.0, 20.0, 50.0);
    let lo = points.iter().map(|p| p.mean - p.std).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.mean + p.std).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if points.is_empty() {
        (0.0, 1.0)
    } else if hi - lo < 1e-9 {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    };
    let sx = |i: usize| left + (i as f64 + 0.5) * (w - left - right) / points.len().max(1) as f64;
    let sy = |v: f64| top + (hi - v) / (hi - lo) * (h - top - bottom);
    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#)?;
    writeln!(s, r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="white" stroke="black"/>"#, w - left - right, h - top - bottom)?;
    let line: Vec<String> = points.iter().enumerate().map(|(i, p)| format!("{:.2},{:.2}", sx(i), sy(p.mean))).collect();
    writeln!(s, r##"<polyline points="{}" fill="none" stroke="#08306b" stroke-width="2"/>"##, line.join(" "))?;
    for (i, p) in points.iter().enumerate() {
        let x = sx(i);
        writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, sy(p.mean - p.std), sy(p.mean + p.std))?;
        writeln!(s, r##"<circle cx="{x:.2}" cy="{:.2}" r="4" fill="#08306b"/>"##, sy(p.mean))?;
        writeln!(s, r#"<text x="{x:.2}" y="{}" font-size="12" text-anchor="middle">{}</text>"#, h - bottom + 18.0, p.value)?;
    }
    writeln!(s, r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{axis}</text>"#, (left + w - right) / 2.0, h - 8.0)?;
    writeln!(s, r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">{hi:.0}</text>"#, left - 4.0, top + 10.0)?;
    writeln!(s, r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">{lo:.0}</text>"#, left - 4.0, h - bottom)?;
    writeln!(
        s,
        r#"<text x="16" y="{:.2}" font-size="13" transform="rotate(-90 16 {:.2})" text-anchor="middle">final return</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0
    )?;
    writeln!(s, "</svg>")?;
    Ok(s)
}
