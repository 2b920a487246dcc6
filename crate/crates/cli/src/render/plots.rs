//! Centile fans, grouped boxplots and trend bands from their CSV tables.

use std::collections::BTreeMap;

use super::svg::{padded, Panel, Svg, PALETTE};
use crate::error::{CliError, CliResult};
use crate::table::Table;

fn first_value(t: &Table, col: usize) -> Option<String> {
    t.rows.first().map(|_| t.get(0, col).to_owned())
}

fn extent(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

struct Fan {
    ages: Vec<f64>,
    /// `rows[a][l]`
    rows: Vec<Vec<f64>>,
}

pub fn centile_fan(t: &Table, feature: Option<&str>) -> CliResult<String> {
    let fcol = t.column("feature")?;
    let (sex, diab, age) = (t.column("sex")?, t.column("diabetes")?, t.column("age_years")?);
    t.column("weight_kg")?;
    let mut levels: Vec<(f64, usize)> = Vec::new();
    for (c, h) in t.headers.iter().enumerate() {
        if let Some(l) = h.strip_prefix('p').and_then(|v| v.parse::<f64>().ok()) {
            levels.push((l, c));
        }
    }
    if levels.is_empty() {
        return Err(CliError::validation(format!("{}: missing centile columns `p<level>`", t.path.display())));
    }
    if levels.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(CliError::validation(format!("{}: centile columns must ascend by level", t.path.display())));
    }
    let feature = feature.map(str::to_owned).or_else(|| first_value(t, fcol));
    let mut fans: BTreeMap<(String, String), Fan> = BTreeMap::new();
    for r in 0..t.rows.len() {
        let vals = levels.iter().map(|&(_, c)| t.parse::<f64>(r, c)).collect::<CliResult<Vec<_>>>()?;
        if vals.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::validation(format!(
                "{}: row {}: centiles are not strictly increasing across levels",
                t.path.display(),
                r + 1
            )));
        }
        if Some(t.get(r, fcol)) != feature.as_deref() {
            continue;
        }
        let a: f64 = t.parse(r, age)?;
        let d: f64 = t.parse(r, diab)?;
        let key = (t.get(r, sex).to_owned(), if d > 0.5 { "t2d".to_string() } else { "control".to_string() });
        let fan = fans.entry(key).or_insert(Fan { ages: Vec::new(), rows: Vec::new() });
        fan.ages.push(a);
        fan.rows.push(vals);
    }
    for fan in fans.values_mut() {
        let mut idx: Vec<usize> = (0..fan.ages.len()).collect();
        idx.sort_by(|&a, &b| fan.ages[a].total_cmp(&fan.ages[b]));
        fan.ages = idx.iter().map(|&i| fan.ages[i]).collect();
        fan.rows = idx.iter().map(|&i| fan.rows[i].clone()).collect();
    }

    let xr = padded_or(extent(fans.values().flat_map(|f| f.ages.iter().copied())), (0.0, 100.0));
    let yr = padded_or(extent(fans.values().flat_map(|f| f.rows.iter().flatten().copied())), (0.0, 1.0));
    let median = levels.iter().position(|l| l.0 == 50.0).unwrap_or(levels.len() / 2);
    let (lo_l, hi_l) = (levels[0].0, levels[levels.len() - 1].0);

    let (pw, ph) = (320.0, 220.0);
    let mut svg = Svg::new(2.0 * pw + 200.0, 2.0 * ph + 190.0);
    let title = feature.clone().unwrap_or_default();
    svg.text(svg.width / 2.0, 22.0, "middle", 15.0, &title);
    for (i, sex) in ["F", "M"].iter().enumerate() {
        for (j, group) in ["control", "t2d"].iter().enumerate() {
            let p = Panel { x: 80.0 + j as f64 * (pw + 100.0), y: 60.0 + i as f64 * (ph + 70.0), w: pw, h: ph, xr, yr };
            let name = format!("{}, {group}", if *sex == "F" { "female" } else { "male" });
            p.axes(&mut svg, &name, "age (years)", &title, true);
            let Some(fan) = fans.get(&(sex.to_string(), group.to_string())) else {
                p.no_data(&mut svg);
                continue;
            };
            let color = PALETTE[j];
            let mut band: Vec<(f64, f64)> =
                fan.ages.iter().zip(&fan.rows).map(|(a, r)| (p.px(*a), p.py(r[r.len() - 1]))).collect();
            band.extend(fan.ages.iter().zip(&fan.rows).rev().map(|(a, r)| (p.px(*a), p.py(r[0]))));
            svg.polygon(&band, &format!(r#"fill="{color}" fill-opacity="0.25" stroke="none""#));
            for l in 1..levels.len().saturating_sub(1) {
                if l == median {
                    continue;
                }
                let pts: Vec<(f64, f64)> = fan.ages.iter().zip(&fan.rows).map(|(a, r)| (p.px(*a), p.py(r[l]))).collect();
                svg.polyline(&pts, &format!(r#"stroke="{color}" stroke-width="1" stroke-dasharray="4 3""#));
            }
            let pts: Vec<(f64, f64)> =
                fan.ages.iter().zip(&fan.rows).map(|(a, r)| (p.px(*a), p.py(r[median]))).collect();
            svg.polyline(&pts, &format!(r#"stroke="{color}" stroke-width="2""#));
        }
    }
    let legend = format!(
        "line: {}th centile; shaded: {}th to {}th",
        super::svg::tick_label(levels[median].0),
        super::svg::tick_label(lo_l),
        super::svg::tick_label(hi_l)
    );
    svg.text(svg.width / 2.0, svg.height - 14.0, "middle", 11.0, &legend);
    Ok(svg.finish())
}

fn padded_or(r: (f64, f64), empty: (f64, f64)) -> (f64, f64) {
    if r.0.is_finite() {
        padded(r.0, r.1)
    } else {
        empty
    }
}

struct BoxRow {
    sex: String,
    n: usize,
    median: f64,
    q1: f64,
    q3: f64,
    lo: f64,
    hi: f64,
    outliers: Vec<f64>,
}

/// Orders age groups by their leading number; "all" and other labels last.
fn group_key(label: &str) -> (u8, i64, String) {
    match label.split('-').next().and_then(|s| s.parse::<i64>().ok()) {
        Some(v) => (0, v, label.to_owned()),
        None => (1, 0, label.to_owned()),
    }
}

pub fn boxplots(t: &Table, feature: Option<&str>) -> CliResult<String> {
    let cols = super::super::commands::stats::BOX_HEADER
        .iter()
        .map(|c| t.column(c))
        .collect::<CliResult<Vec<_>>>()?;
    let feature = feature.map(str::to_owned).or_else(|| first_value(t, cols[0]));
    let mut groups: BTreeMap<(u8, i64, String), Vec<BoxRow>> = BTreeMap::new();
    for r in 0..t.rows.len() {
        if Some(t.get(r, cols[0])) != feature.as_deref() {
            continue;
        }
        let outliers = t
            .get(r, cols[9])
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|e| {
                    CliError::validation(format!("{}: row {}, column `outliers`: {e}", t.path.display(), r + 1))
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let b = BoxRow {
            sex: t.get(r, cols[1]).to_owned(),
            n: t.parse(r, cols[3])?,
            median: t.parse(r, cols[4])?,
            q1: t.parse(r, cols[5])?,
            q3: t.parse(r, cols[6])?,
            lo: t.parse(r, cols[7])?,
            hi: t.parse(r, cols[8])?,
            outliers,
        };
        if !(b.lo <= b.hi && b.q1 <= b.median && b.median <= b.q3) {
            return Err(CliError::validation(format!(
                "{}: row {}: quartiles out of order",
                t.path.display(),
                r + 1
            )));
        }
        groups.entry(group_key(t.get(r, cols[2]))).or_default().push(b);
    }
    let title = feature.clone().unwrap_or_default();
    let n_groups = groups.len().max(1);
    let slot = 90.0;
    let mut svg = Svg::new(n_groups as f64 * slot + 200.0, 420.0);
    svg.text(svg.width / 2.0, 22.0, "middle", 15.0, &title);
    let yr = padded_or(
        extent(groups.values().flatten().flat_map(|b| [b.lo, b.hi].into_iter().chain(b.outliers.iter().copied()))),
        (0.0, 1.0),
    );
    let p = Panel { x: 90.0, y: 50.0, w: n_groups as f64 * slot, h: 300.0, xr: (0.0, n_groups as f64), yr };
    p.axes(&mut svg, "", "age group (years)", &title, false);
    if groups.is_empty() {
        p.no_data(&mut svg);
    }
    let sexes = ["F", "M"];
    for (g, (key, rows)) in groups.iter().enumerate() {
        let cx = p.px(g as f64 + 0.5);
        svg.text(cx, p.y + p.h + 16.0, "middle", 10.0, &key.2);
        for b in rows {
            let s = sexes.iter().position(|x| *x == b.sex).unwrap_or(2);
            let color = PALETTE[s.min(PALETTE.len() - 1)];
            let x = cx + if s == 0 { -30.0 } else { 2.0 };
            let w = 28.0;
            let mid = x + w / 2.0;
            svg.line(mid, p.py(b.lo), mid, p.py(b.q1), "#333333", 1.0);
            svg.line(mid, p.py(b.q3), mid, p.py(b.hi), "#333333", 1.0);
            svg.line(x + 6.0, p.py(b.lo), x + w - 6.0, p.py(b.lo), "#333333", 1.0);
            svg.line(x + 6.0, p.py(b.hi), x + w - 6.0, p.py(b.hi), "#333333", 1.0);
            let top = p.py(b.q3);
            svg.rect(
                x,
                top,
                w,
                (p.py(b.q1) - top).max(0.5),
                &format!(r##"fill="{color}" fill-opacity="0.5" stroke="#333333" data-n="{}""##, b.n),
            );
            svg.line(x, p.py(b.median), x + w, p.py(b.median), "#000000", 2.0);
            for o in &b.outliers {
                svg.circle(mid, p.py(*o), 2.5, &format!(r#"fill="none" stroke="{color}""#));
            }
        }
    }
    for (s, sex) in sexes.iter().enumerate() {
        let y = p.y + 14.0 + 18.0 * s as f64;
        let x = p.x + p.w + 16.0;
        svg.rect(x, y - 9.0, 12.0, 12.0, &format!(r#"fill="{}" fill-opacity="0.5""#, PALETTE[s]));
        svg.text(x + 18.0, y + 1.0, "start", 11.0, if *sex == "F" { "female" } else { "male" });
    }
    Ok(svg.finish())
}

pub fn trend(t: &Table) -> CliResult<String> {
    let cols = super::super::commands::stats::TREND_HEADER
        .iter()
        .map(|c| t.column(c))
        .collect::<CliResult<Vec<_>>>()?;
    let mut series: BTreeMap<String, Vec<[f64; 4]>> = BTreeMap::new();
    for r in 0..t.rows.len() {
        let v = [t.parse(r, cols[1])?, t.parse(r, cols[2])?, t.parse(r, cols[3])?, t.parse(r, cols[4])?];
        if !(v[2] <= v[1] && v[1] <= v[3]) {
            return Err(CliError::validation(format!(
                "{}: row {}: fit lies outside its band",
                t.path.display(),
                r + 1
            )));
        }
        series.entry(t.get(r, cols[0]).to_owned()).or_default().push(v);
    }
    for s in series.values_mut() {
        s.sort_by(|a, b| a[0].total_cmp(&b[0]));
    }
    let xr = padded_or(extent(series.values().flatten().map(|v| v[0])), (0.0, 100.0));
    let yr = padded_or(extent(series.values().flatten().flat_map(|v| [v[2], v[3]])), (0.0, 1.0));
    let mut svg = Svg::new(720.0, 420.0);
    let p = Panel { x: 90.0, y: 50.0, w: 460.0, h: 300.0, xr, yr };
    p.axes(&mut svg, "trend with 95% confidence band", "age (years)", "value", true);
    if series.is_empty() {
        p.no_data(&mut svg);
    }
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut band: Vec<(f64, f64)> = pts.iter().map(|v| (p.px(v[0]), p.py(v[3]))).collect();
        band.extend(pts.iter().rev().map(|v| (p.px(v[0]), p.py(v[2]))));
        svg.polygon(&band, &format!(r#"fill="{color}" fill-opacity="0.2" stroke="none""#));
        let line: Vec<(f64, f64)> = pts.iter().map(|v| (p.px(v[0]), p.py(v[1]))).collect();
        svg.polyline(&line, &format!(r#"stroke="{color}" stroke-width="2""#));
        let y = p.y + 14.0 + 18.0 * k as f64;
        svg.line(p.x + p.w + 16.0, y - 3.0, p.x + p.w + 30.0, y - 3.0, color, 2.0);
        svg.text(p.x + p.w + 36.0, y + 1.0, "start", 11.0, name);
    }
    Ok(svg.finish())
}
