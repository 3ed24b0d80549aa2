use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use super::{fan_out, non_decreasing, row, Check, ExperimentConfig, ExperimentError, Replicate, RunRecord};
use crate::coupling::{extract_chains, forest_window_diff, run_natural_ladder};
use crate::lattice::Site;
use crate::stats::Proportion;

fn strictly_increasing(v: &[u32]) -> bool {
    v.windows(2).all(|p| p[0] < p[1])
}

struct ForestSeed {
    equal: Vec<bool>,
    witnessed: Vec<bool>,
    diff_sizes: Vec<usize>,
    smallest_stable: u32,
}

/// Forests `F_n[N]` over the `N` grid under one natural ladder per seed;
/// stability of consecutive pairs inside `Z_K`, and chain witnesses for
/// every unstable pair.
pub fn stabilization_scan_forest(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    cfg.check_common()?;
    let grid = &cfg.windows;
    let k = cfg.strip;
    cfg.require(!grid.is_empty(), "N grid must be non-empty")?;
    cfg.require(strictly_increasing(grid), "N grid must be strictly increasing")?;
    cfg.require(grid[0] >= k, "smallest N must be at least K")?;

    let per_seed = fan_out(cfg, |_, seed| {
        let run = run_natural_ladder(seed, cfg.dim, grid, cfg.horizon, cfg.step_budget, false)?;
        let forests = run.ladder.forests();
        let mut out = ForestSeed {
            equal: Vec::new(),
            witnessed: Vec::new(),
            diff_sizes: Vec::new(),
            smallest_stable: *grid.last().unwrap(),
        };
        for a in 0..grid.len().saturating_sub(1) {
            let diff = forest_window_diff(&forests[a], &forests[a + 1], k);
            let witnessed = diff.is_empty() || {
                let chains = extract_chains(&run.log, a, a + 1);
                let created: BTreeSet<Site> = chains
                    .iter()
                    .filter(|c| c.reaches_strip(k) && c.validate().is_ok())
                    .flat_map(|c| c.relays.iter().map(|r| r.created))
                    .collect();
                diff.iter().all(|v| created.contains(v))
            };
            out.equal.push(diff.is_empty());
            out.witnessed.push(witnessed);
            out.diff_sizes.push(diff.len());
        }
        // window equality in Z_K is transitive, so stability from index i on
        // means every later consecutive pair is equal
        let mut i = grid.len() - 1;
        while i > 0 && out.equal[i - 1] {
            i -= 1;
        }
        out.smallest_stable = grid[i];
        Ok(out)
    })?;

    let mut rec = RunRecord::new(cfg);
    for (index, seed, s) in &per_seed {
        rec.replicates.push(Replicate {
            index: *index,
            seed: *seed,
            data: json!({
                "equal": s.equal,
                "witnessed": s.witnessed,
                "diff_sizes": s.diff_sizes,
                "smallest_stable": s.smallest_stable,
            }),
        });
    }
    let n = cfg.seeds;
    let mut props = Vec::new();
    let mut unwitnessed = 0u64;
    if grid.len() == 1 {
        let p = Proportion::new(n, n);
        props.push(p);
        rec.summary.push(pair_row(grid[0], grid[0], &p, 0));
    }
    for a in 0..grid.len().saturating_sub(1) {
        let hits = per_seed.iter().filter(|(_, _, s)| s.equal[a]).count() as u64;
        let bad = per_seed.iter().filter(|(_, _, s)| !s.witnessed[a]).count() as u64;
        unwitnessed += bad;
        let p = Proportion::new(hits, n);
        props.push(p);
        rec.summary.push(pair_row(grid[a], grid[a + 1], &p, bad));
    }
    let mut hist: BTreeMap<u32, u64> = grid.iter().map(|g| (*g, 0)).collect();
    for (_, _, s) in &per_seed {
        *hist.get_mut(&s.smallest_stable).unwrap() += 1;
    }

    rec.checks.push(Check::new(
        "trend_non_decreasing",
        non_decreasing(&props),
        format!(
            "stable fractions {:?}",
            props.iter().map(|p| p.p_hat).collect::<Vec<_>>()
        ),
    ));
    rec.checks.push(Check::new(
        "instabilities_witnessed",
        unwitnessed == 0,
        format!("{unwitnessed} unstable (seed, pair) cases without a chain witness"),
    ));
    if let Some(t) = cfg.threshold {
        let top = props.last().unwrap();
        rec.checks.push(Check::new(
            "top_pair_threshold",
            top.p_hat >= t,
            format!("top pair stable fraction {} vs threshold {t}", top.p_hat),
        ));
    }
    rec.checks.push(Check::new(
        "smallest_stable_distribution",
        true,
        hist.iter()
            .map(|(g, c)| format!("N={g}:{c}"))
            .collect::<Vec<_>>()
            .join(" "),
    ));
    Ok(rec)
}

fn pair_row(a: u32, b: u32, p: &Proportion, unwitnessed: u64) -> serde_json::Map<String, serde_json::Value> {
    row([
        ("n_small", json!(a)),
        ("n_large", json!(b)),
        ("seeds", json!(p.trials)),
        ("stable", json!(p.hits)),
        ("fraction", json!(p.p_hat)),
        ("ci_lo", json!(p.ci_lo)),
        ("ci_hi", json!(p.ci_hi)),
        ("unwitnessed", json!(unwitnessed)),
    ])
}

/// Agreement of `A_n[2M] ∩ Z_M` with `A_n[4M] ∩ Z_M` for each `M` of the grid,
/// all windows taken from one natural ladder per seed.
pub fn stabilization_scan_aggregate(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    cfg.check_common()?;
    let grid = &cfg.windows;
    cfg.require(!grid.is_empty(), "M grid must be non-empty")?;
    cfg.require(strictly_increasing(grid), "M grid must be strictly increasing")?;
    cfg.require(grid[0] >= 1, "M must be positive")?;
    let ladder: Vec<u32> = grid
        .iter()
        .flat_map(|m| [2 * m, 4 * m])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let per_seed = fan_out(cfg, |_, seed| {
        let run = run_natural_ladder(seed, cfg.dim, &ladder, cfg.horizon, cfg.step_budget, false)?;
        let l = &run.ladder;
        let agree: Vec<bool> = grid
            .iter()
            .map(|m| {
                let a = l.state(2 * m).unwrap().strip_sites(*m);
                let b = l.state(4 * m).unwrap().strip_sites(*m);
                a == b
            })
            .collect();
        Ok(agree)
    })?;

    let mut rec = RunRecord::new(cfg);
    for (index, seed, agree) in &per_seed {
        rec.replicates.push(Replicate {
            index: *index,
            seed: *seed,
            data: json!({ "agree": agree }),
        });
    }
    let mut props = Vec::new();
    for (i, m) in grid.iter().enumerate() {
        let hits = per_seed.iter().filter(|(_, _, a)| a[i]).count() as u64;
        let p = Proportion::new(hits, cfg.seeds);
        rec.summary.push(row([
            ("m", json!(m)),
            ("seeds", json!(p.trials)),
            ("agree", json!(p.hits)),
            ("fraction", json!(p.p_hat)),
            ("ci_lo", json!(p.ci_lo)),
            ("ci_hi", json!(p.ci_hi)),
        ]));
        props.push(p);
    }
    rec.checks.push(Check::new(
        "trend_non_decreasing",
        non_decreasing(&props),
        format!(
            "agreement fractions {:?}",
            props.iter().map(|p| p.p_hat).collect::<Vec<_>>()
        ),
    ));
    if let Some(t) = cfg.threshold {
        let top = props.last().unwrap();
        rec.checks.push(Check::new(
            "threshold",
            top.p_hat >= t,
            format!("agreement at M={} is {} vs threshold {t}", grid.last().unwrap(), top.p_hat),
        ));
    }
    Ok(rec)
}
