use std::collections::BTreeSet;

use serde_json::json;

use super::{
    fan_out, non_decreasing, non_increasing, row, Check, ExperimentConfig, ExperimentError,
    Replicate, RunRecord,
};
use crate::coupling::run_natural_ladder;
use crate::engine::{build_aggregate, Aggregate, SimConfig};
use crate::lattice::{ConeSpec, Site, Source};
use crate::rng::{clock_count, StepSource, StreamKey, WalkStream};
use crate::stats::{correlation_ci, homogeneity, pearson, Proportion};

fn cone(cfg: &ExperimentConfig) -> Result<ConeSpec, ExperimentError> {
    Ok(ConeSpec::new(cfg.cone_epsilon, cfg.cone_alpha)?)
}

fn proxy(cfg: &ExperimentConfig, window: u32, horizon: f64, seed: u64) -> Result<Aggregate, ExperimentError> {
    let mut sim = SimConfig::new(cfg.dim, window, horizon, seed);
    sim.step_budget = cfg.step_budget;
    Ok(build_aggregate(&sim)?)
}

fn source_on_axis(dim: usize, level: i32) -> Result<Source, ExperimentError> {
    let mut c = vec![0i32; dim - 1];
    c[0] = level;
    Ok(Source::from_hyperplane(&c)?)
}

/// Frequency of proxy aggregates `A_n[2M]` with an occupied site outside
/// `Z_M` and outside the cone.
pub fn cone_scan(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    cfg.check_common()?;
    let spec = cone(cfg)?;
    let a = spec.alpha.to_f64();
    let d = cfg.dim as f64;
    cfg.require(a > 1.0 - 1.0 / d && a < 1.0, "alpha must lie in (1 - 1/d, 1)")?;
    let grid = &cfg.windows;
    cfg.require(!grid.is_empty(), "M grid must be non-empty")?;
    cfg.require(grid.windows(2).all(|p| p[0] < p[1]), "M grid must be strictly increasing")?;
    let ladder: Vec<u32> = grid.iter().map(|m| 2 * m).collect();

    let per_seed = fan_out(cfg, |_, seed| {
        let run = run_natural_ladder(seed, cfg.dim, &ladder, cfg.horizon, cfg.step_budget, false)?;
        let v: Vec<u64> = grid
            .iter()
            .zip(&run.ladder.states)
            .map(|(m, agg)| {
                agg.sites()
                    .filter(|s| !s.in_strip(*m) && !spec.contains(s))
                    .count() as u64
            })
            .collect();
        Ok(v)
    })?;

    let mut rec = RunRecord::new(cfg);
    for (index, seed, v) in &per_seed {
        rec.replicates.push(Replicate {
            index: *index,
            seed: *seed,
            data: json!({ "violating_sites": v }),
        });
    }
    let mut props = Vec::new();
    for (i, m) in grid.iter().enumerate() {
        let hits = per_seed.iter().filter(|(_, _, v)| v[i] > 0).count() as u64;
        let p = Proportion::new(hits, cfg.seeds);
        rec.summary.push(row([
            ("m", json!(m)),
            ("proxy_window", json!(2 * m)),
            ("seeds", json!(p.trials)),
            ("violations", json!(p.hits)),
            ("frequency", json!(p.p_hat)),
            ("ci_lo", json!(p.ci_lo)),
            ("ci_hi", json!(p.ci_hi)),
        ]));
        props.push(p);
    }
    rec.checks.push(Check::new(
        "trend_non_increasing",
        non_increasing(&props),
        format!("violation frequencies {:?}", props.iter().map(|p| p.p_hat).collect::<Vec<_>>()),
    ));
    Ok(rec)
}

/// Donut boundaries `L_0 = start > L_1 > ... >= m`, each donut of width
/// `ceil(2 eps L_i^alpha)`; a last donut that would cross below `m` is not built.
pub fn donut_levels(start: u32, m: u32, cone: &ConeSpec) -> Vec<u32> {
    let mut out = vec![start];
    let mut l = start;
    loop {
        let w = (2.0 * cone.half_width(l)).ceil().max(1.0) as u32;
        if l < m + w {
            break;
        }
        l -= w;
        out.push(l);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WalkEnd {
    Reached,
    Exited,
    Censored,
}

/// Runs one free walk from `z`; returns how it ended and how many donut
/// boundaries it passed.
fn strip_walk<S: StepSource>(
    walk: &mut S,
    z: Source,
    m: u32,
    cone: &ConeSpec,
    donuts: &[u32],
    budget: u64,
) -> Result<(WalkEnd, usize), ExperimentError> {
    let mut pos = z.site();
    let mut passed = 1usize;
    let mut steps = 0u64;
    loop {
        let level = pos.hyperplane_norm();
        while passed < donuts.len() && level <= donuts[passed] {
            passed += 1;
        }
        if level <= m {
            return Ok((WalkEnd::Reached, passed));
        }
        if !cone.contains(&pos) {
            return Ok((WalkEnd::Exited, passed));
        }
        if steps >= budget {
            return Ok((WalkEnd::Censored, passed));
        }
        pos = pos.step(walk.next_step())?;
        steps += 1;
    }
}

/// Free walks from level `L` sources: fraction reaching `Z_M` inside the cone
/// and per-donut conditional crossing frequencies.
pub fn strip_entry_scan(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    cfg.check_common()?;
    let spec = cone(cfg)?;
    let m = cfg.strip;
    cfg.require(!cfg.levels.is_empty(), "levels must be non-empty")?;
    cfg.require(cfg.levels.iter().all(|l| *l > 2 * m), "levels must exceed 2M")?;
    cfg.require(cfg.walks > 0, "walks must be positive")?;
    let seed = cfg.seed(0);
    let c = 1.0 - (2.0 * cfg.dim as f64).powi(-2);

    let mut rec = RunRecord::new(cfg);
    let mut reach_props = Vec::new();
    let mut donut_ok = true;
    let mut worst = f64::NEG_INFINITY;
    let mut tested = 0usize;
    for (li, &level) in cfg.levels.iter().enumerate() {
        let z = source_on_axis(cfg.dim, level as i32)?;
        let donuts = donut_levels(level, m, &spec);
        let ends: Vec<(WalkEnd, usize)> = {
            use rayon::prelude::*;
            (1..=cfg.walks)
                .into_par_iter()
                .map(|j| {
                    let mut w = WalkStream::new(&StreamKey::walk(seed, z, j as u32));
                    strip_walk(&mut w, z, m, &spec, &donuts, cfg.step_budget)
                })
                .collect::<Result<_, _>>()?
        };
        let censored = ends.iter().filter(|e| e.0 == WalkEnd::Censored).count() as u64;
        let reached = ends.iter().filter(|e| e.0 == WalkEnd::Reached).count() as u64;
        let reach = Proportion::new(reached, cfg.walks - censored);
        rec.replicates.push(Replicate {
            index: li as u64,
            seed,
            data: json!({
                "level": level,
                "donuts": donuts,
                "reached": reached,
                "censored": censored,
            }),
        });
        // donut i spans (donuts[i+1], donuts[i]]; a walk is at risk in donut i
        // once it passed boundary i, and crosses it by passing boundary i+1
        for i in 0..donuts.len().saturating_sub(1) {
            let at_risk: Vec<&(WalkEnd, usize)> = ends
                .iter()
                .filter(|e| e.1 > i && !(e.0 == WalkEnd::Censored && e.1 == i + 1))
                .collect();
            let crossed = at_risk.iter().filter(|e| e.1 > i + 1).count() as u64;
            let p = Proportion::new(crossed, at_risk.len() as u64);
            let sigma = p.sigma();
            let ok = p.trials == 0 || p.p_hat <= c + 3.0 * sigma;
            donut_ok &= ok;
            if p.trials > 0 {
                tested += 1;
                worst = worst.max(p.p_hat - c - 3.0 * sigma);
            }
            rec.summary.push(row([
                ("level", json!(level)),
                ("donut", json!(i)),
                ("outer", json!(donuts[i])),
                ("inner", json!(donuts[i + 1])),
                ("at_risk", json!(p.trials)),
                ("crossed", json!(p.hits)),
                ("frequency", json!(p.p_hat)),
                ("sigma", json!(sigma)),
                ("bound", json!(c)),
                ("reach_fraction", json!(reach.p_hat)),
            ]));
        }
        if donuts.len() < 2 {
            rec.summary.push(row([
                ("level", json!(level)),
                ("donut", json!(null)),
                ("outer", json!(level)),
                ("inner", json!(null)),
                ("at_risk", json!(0)),
                ("crossed", json!(0)),
                ("frequency", json!(null)),
                ("sigma", json!(null)),
                ("bound", json!(c)),
                ("reach_fraction", json!(reach.p_hat)),
            ]));
        }
        reach_props.push(reach);
    }
    rec.checks.push(Check::new(
        "donut_crossing_bound",
        donut_ok,
        format!("max (frequency - bound - 3 sigma) = {worst}"),
    ));
    rec.checks.push(Check::new(
        "donuts_tested",
        tested > 0,
        format!("{tested} donuts with at least one walk at risk"),
    ));
    rec.checks.push(Check::new(
        "reach_below_one",
        reach_props.iter().all(|p| p.hits < p.trials),
        format!("reach fractions {:?}", reach_props.iter().map(|p| p.p_hat).collect::<Vec<_>>()),
    ));
    rec.checks.push(Check::new(
        "reach_non_increasing_in_level",
        non_increasing(&reach_props),
        "one-sided with 95% Wilson slack".to_string(),
    ));
    Ok(rec)
}

/// Occupied count of the box `|x_1| <= K`, `|x_a - c_a| <= K` around the
/// hyperplane point `c = (0, shift, 0, ...)`.
fn box_count(agg: &Aggregate, dim: usize, k: u32, shift: i32) -> Result<u64, ExperimentError> {
    let k = k as i32;
    let mut n = 0u64;
    let mut off = vec![-k; dim];
    loop {
        let mut c = off.clone();
        c[1] += shift;
        if agg.contains(&Site::new(&c)?) {
            n += 1;
        }
        let mut a = 0;
        loop {
            if a == dim {
                return Ok(n);
            }
            if off[a] < k {
                off[a] += 1;
                break;
            }
            off[a] = -k;
            a += 1;
        }
    }
}

/// Merges adjacent count values so that every column of the table has a
/// pooled total of at least `5 * rows` (expected cell count >= 5).
fn merged_table(samples: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let max = samples.iter().flatten().copied().max().unwrap_or(0) as usize;
    let rows = samples.len() as u64;
    let hist: Vec<Vec<u64>> = samples
        .iter()
        .map(|s| {
            let mut h = vec![0u64; max + 1];
            for v in s {
                h[*v as usize] += 1;
            }
            h
        })
        .collect();
    let mut bins: Vec<Vec<usize>> = Vec::new();
    let mut cur = Vec::new();
    let mut tot = 0u64;
    for v in 0..=max {
        cur.push(v);
        tot += hist.iter().map(|h| h[v]).sum::<u64>();
        if tot >= 5 * rows {
            bins.push(std::mem::take(&mut cur));
            tot = 0;
        }
    }
    if !cur.is_empty() {
        match bins.last_mut() {
            Some(b) => b.extend(cur),
            None => bins.push(cur),
        }
    }
    hist.iter()
        .map(|h| bins.iter().map(|b| b.iter().map(|v| h[*v]).sum()).collect())
        .collect()
}

/// Local occupation counts of a proxy aggregate near the origin and near
/// each shift: homogeneity across positions and correlation with the origin.
pub fn translation_test(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    cfg.check_common()?;
    cfg.require(!cfg.shifts.is_empty(), "shifts must be non-empty")?;
    let k = cfg.strip;
    let reach = cfg.shifts.iter().map(|s| s.unsigned_abs()).max().unwrap() + k;
    let window = if cfg.proxy_window > 0 {
        cfg.proxy_window
    } else {
        2 * reach + 10
    };
    cfg.require(window > reach, "proxy window must contain every shifted box")?;

    let per_seed = fan_out(cfg, |_, seed| {
        let agg = proxy(cfg, window, cfg.horizon, seed)?;
        let origin = box_count(&agg, cfg.dim, k, 0)?;
        let shifted = cfg
            .shifts
            .iter()
            .map(|s| box_count(&agg, cfg.dim, k, *s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((origin, shifted))
    })?;

    let mut rec = RunRecord::new(cfg);
    for (index, seed, (o, s)) in &per_seed {
        rec.replicates.push(Replicate {
            index: *index,
            seed: *seed,
            data: json!({ "origin": o, "shifted": s }),
        });
    }
    let origin: Vec<u64> = per_seed.iter().map(|r| r.2 .0).collect();
    let ox: Vec<f64> = origin.iter().map(|v| *v as f64).collect();
    let n = per_seed.len();
    let mut all_homogeneous = true;
    let mut corr = Vec::new();
    for (i, shift) in cfg.shifts.iter().enumerate() {
        let sh: Vec<u64> = per_seed.iter().map(|r| r.2 .1[i]).collect();
        let t = homogeneity(&merged_table(&[origin.clone(), sh.clone()]));
        all_homogeneous &= t.p_value >= cfg.alpha;
        let sx: Vec<f64> = sh.iter().map(|v| *v as f64).collect();
        let r = pearson(&ox, &sx);
        let (lo, hi) = correlation_ci(r, n);
        corr.push((*shift, r, lo, hi));
        rec.summary.push(row([
            ("shift", json!(shift)),
            ("mean_origin", json!(crate::stats::mean(&ox))),
            ("mean_shift", json!(crate::stats::mean(&sx))),
            ("chi2", json!(t.statistic)),
            ("df", json!(t.df)),
            ("p_value", json!(t.p_value)),
            ("correlation", json!(r)),
            ("corr_lo", json!(lo)),
            ("corr_hi", json!(hi)),
        ]));
    }
    let all_positions: Vec<Vec<u64>> = std::iter::once(origin.clone())
        .chain((0..cfg.shifts.len()).map(|i| per_seed.iter().map(|r| r.2 .1[i]).collect()))
        .collect();
    let joint = homogeneity(&merged_table(&all_positions));
    rec.checks.push(Check::new(
        "homogeneity",
        all_homogeneous && joint.p_value >= cfg.alpha,
        format!("joint chi2 {} on {} df, p = {}", joint.statistic, joint.df, joint.p_value),
    ));
    let mut by_dist = corr.clone();
    by_dist.sort_by_key(|c| c.0.unsigned_abs());
    let decays = by_dist.windows(2).all(|p| {
        let (a, b) = (&p[0], &p[1]);
        b.1 <= a.1 + (a.3 - a.2) / 2.0 + (b.3 - b.2) / 2.0
    });
    rec.checks.push(Check::new(
        "correlation_decay",
        decays,
        "finite-window indicator of mixing, not an estimate of the mixing coefficient".to_string(),
    ));
    Ok(rec)
}

/// Rooted-source density against `1 - e^{-n}`, and vacant lines
/// `L(y) = {(k, y) : k in Z}` missing the proxy aggregate for `|y| <= region`.
pub fn rooted_and_vacant_scan(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    cfg.check_common()?;
    let region = cfg.region;
    let window = if cfg.proxy_window > 0 {
        cfg.proxy_window
    } else {
        2 * region + 10
    };
    cfg.require(window >= region, "proxy window must contain the region")?;
    let sources = Source::origin(cfg.dim)?.ball(region);

    let per_seed = fan_out(cfg, |_, seed| {
        let rooted: Vec<Source> = sources
            .iter()
            .copied()
            .filter(|z| clock_count(seed, *z, cfg.horizon) > 0)
            .collect();
        let agg = proxy(cfg, window, cfg.horizon, seed)?;
        let unoccupied_roots = rooted.iter().filter(|z| !agg.contains(&z.site())).count() as u64;
        let hit: BTreeSet<Source> = agg
            .sites()
            .filter(|s| s.hyperplane_norm() <= region)
            .map(|s| s.project())
            .collect();
        let vacant = (sources.len() - hit.len()) as u64;
        Ok((rooted.len() as u64, unoccupied_roots, vacant))
    })?;

    let mut rec = RunRecord::new(cfg);
    for (index, seed, (r, u, v)) in &per_seed {
        rec.replicates.push(Replicate {
            index: *index,
            seed: *seed,
            data: json!({ "rooted": r, "unoccupied_roots": u, "vacant_lines": v }),
        });
    }
    let total = sources.len() as u64 * cfg.seeds;
    let rooted: u64 = per_seed.iter().map(|r| r.2 .0).sum();
    let density = Proportion::new(rooted, total);
    let expected = -(-cfg.horizon).exp_m1();
    let tol = 3.0 * (expected * (1.0 - expected) / total as f64).sqrt();
    let with_vacant = per_seed.iter().filter(|r| r.2 .2 > 0).count() as u64;
    let vac = Proportion::new(with_vacant, cfg.seeds);
    let mean_vacant =
        per_seed.iter().map(|r| r.2 .2 as f64).sum::<f64>() / cfg.seeds as f64;
    rec.summary.push(row([
        ("horizon", json!(cfg.horizon)),
        ("sources", json!(total)),
        ("rooted", json!(rooted)),
        ("density", json!(density.p_hat)),
        ("expected", json!(expected)),
        ("ci_lo", json!(density.ci_lo)),
        ("ci_hi", json!(density.ci_hi)),
        ("lines", json!(sources.len())),
        ("mean_vacant_lines", json!(mean_vacant)),
        ("seeds_with_vacant", json!(vac.p_hat)),
    ]));
    rec.checks.push(Check::new(
        "rooted_density",
        (density.p_hat - expected).abs() <= tol,
        format!("|{} - {expected}| vs 3 sigma = {tol}", density.p_hat),
    ));
    let unocc: u64 = per_seed.iter().map(|r| r.2 .1).sum();
    rec.checks.push(Check::new(
        "rooted_sources_occupied",
        unocc == 0,
        format!("{unocc} rooted sources left empty"),
    ));
    if let Some(t) = cfg.threshold {
        rec.checks.push(Check::new(
            "vacant_lines_present",
            vac.p_hat >= t,
            format!("fraction of seeds with a vacant line {} vs threshold {t}", vac.p_hat),
        ));
    }
    Ok(rec)
}

fn coverage_set(cfg: &ExperimentConfig) -> Result<Vec<Site>, ExperimentError> {
    if !cfg.sites.is_empty() {
        let mut v = Vec::new();
        for c in &cfg.sites {
            cfg.require(c.len() == cfg.dim, "site coordinates must have length d")?;
            v.push(Site::new(c)?);
        }
        v.sort();
        v.dedup();
        return Ok(v);
    }
    let Some(r) = cfg.site_radius else {
        return Ok(Vec::new());
    };
    // l1 ball of radius r
    let r = r as i32;
    let mut out = Vec::new();
    let mut c = vec![-r; cfg.dim];
    loop {
        if c.iter().map(|x| x.abs()).sum::<i32>() <= r {
            out.push(Site::new(&c)?);
        }
        let mut a = 0;
        loop {
            if a == cfg.dim {
                return Ok(out);
            }
            if c[a] < r {
                c[a] += 1;
                break;
            }
            c[a] = -r;
            a += 1;
        }
    }
}

/// Fraction of seeds whose proxy aggregate covers `S`, per horizon. Proxy
/// aggregates at smaller horizons are prefixes of the one at the largest
/// horizon, so one build per seed gives the coverage time of `S`.
pub fn coverage_scan(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    cfg.check_common()?;
    let grid = &cfg.horizons;
    cfg.require(!grid.is_empty(), "horizon grid must be non-empty")?;
    cfg.require(grid.windows(2).all(|p| p[0] <= p[1]), "horizon grid must be non-decreasing")?;
    let set = coverage_set(cfg)?;
    let reach = set.iter().map(|s| s.hyperplane_norm()).max().unwrap_or(0);
    let window = if cfg.proxy_window > 0 {
        cfg.proxy_window
    } else {
        2 * reach + 10
    };
    let n_max = *grid.last().unwrap();

    let per_seed = fan_out(cfg, |_, seed| {
        let agg = proxy(cfg, window, n_max, seed)?;
        let mut t = 0.0f64;
        for s in &set {
            match agg.insertion(s) {
                Some(ins) => t = t.max(ins.emission.time),
                None => return Ok(None),
            }
        }
        Ok(Some(t))
    })?;

    let mut rec = RunRecord::new(cfg);
    for (index, seed, t) in &per_seed {
        rec.replicates.push(Replicate {
            index: *index,
            seed: *seed,
            data: json!({ "coverage_time": t }),
        });
    }
    let single_source = match set.as_slice() {
        [s] if s.coord(0) == 0 && s.hyperplane_norm() <= window => Some(s.project()),
        _ => None,
    };
    let mut props = Vec::new();
    let mut bound_ok = true;
    let mut rooted_ok = true;
    for &n in grid {
        let hits = per_seed
            .iter()
            .filter(|r| r.2.is_some_and(|t| t <= n))
            .count() as u64;
        let p = Proportion::new(hits, cfg.seeds);
        let lower = single_source.map(|_| -(-n).exp_m1());
        if let Some(l) = lower {
            bound_ok &= p.p_hat + p.half_width() >= l;
        }
        if let Some(z) = single_source {
            for (_, seed, t) in &per_seed {
                if clock_count(*seed, z, n) > 0 && !t.is_some_and(|t| t <= n) {
                    rooted_ok = false;
                }
            }
        }
        rec.summary.push(row([
            ("horizon", json!(n)),
            ("sites", json!(set.len())),
            ("proxy_window", json!(window)),
            ("seeds", json!(p.trials)),
            ("covered", json!(p.hits)),
            ("fraction", json!(p.p_hat)),
            ("ci_lo", json!(p.ci_lo)),
            ("ci_hi", json!(p.ci_hi)),
            ("lower_bound", json!(lower)),
        ]));
        props.push(p);
    }
    rec.checks.push(Check::new(
        "trend_non_decreasing",
        non_decreasing(&props),
        format!("coverage fractions {:?}", props.iter().map(|p| p.p_hat).collect::<Vec<_>>()),
    ));
    if single_source.is_some() {
        rec.checks.push(Check::new(
            "clock_mass_lower_bound",
            bound_ok && rooted_ok,
            "fraction >= 1 - e^{-n} within CI, and every seed with an emission covers the site",
        ));
    }
    Ok(rec)
}
