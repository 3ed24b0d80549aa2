use rayon::prelude::*;
use serde_json::json;

use super::{row, Check, ExperimentConfig, ExperimentError, Replicate, RunRecord};
use crate::lattice::Source;
use crate::percolation::{
    c_geom, check_multiscale, check_union_bound, estimate_pi, radii_table, RadiusRecord,
    Verdict,
};
use crate::rng::replicate_seed;
use crate::stats::Proportion;

const BATCH: u64 = 64;

/// Empirical tail `P(R >= m)` of the radii `R((z,t),T)` of the tops in
/// `[0, ε]` of the region sources, against frozen references `A_T[M_ref]`.
///
/// With `trials > 0`, seeds are consumed in index order until `trials`
/// records are collected and the list is cut at exactly `trials`.
pub fn radius_tail_scan(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    cfg.check_common()?;
    cfg.require(!cfg.levels.is_empty(), "levels must be non-empty")?;
    cfg.require(cfg.region <= cfg.reference_window, "region must lie inside the reference window")?;
    let region = Source::origin(cfg.dim)?.ball(cfg.region);

    let run_seed = |i: u64| -> Result<(u64, Vec<RadiusRecord>), ExperimentError> {
        let seed = cfg.seed(i);
        let t = radii_table(
            seed,
            cfg.dim,
            &region,
            cfg.epsilon,
            cfg.reference_horizon,
            cfg.reference_window,
            cfg.step_budget,
        )?;
        Ok((seed, t.records))
    };

    let mut per_seed: Vec<(u64, Vec<RadiusRecord>)> = Vec::new();
    if cfg.trials > 0 {
        let mut have = 0u64;
        let mut next = 0u64;
        while have < cfg.trials {
            let batch: Vec<_> = (next..next + BATCH)
                .into_par_iter()
                .map(run_seed)
                .collect::<Result<_, _>>()?;
            next += BATCH;
            for b in batch {
                if have >= cfg.trials {
                    break;
                }
                let mut b = b;
                let room = (cfg.trials - have) as usize;
                b.1.truncate(room);
                have += b.1.len() as u64;
                per_seed.push(b);
            }
        }
    } else {
        per_seed = (0..cfg.seeds)
            .into_par_iter()
            .map(run_seed)
            .collect::<Result<_, _>>()?;
    }

    let mut rec = RunRecord::new(cfg);
    for (i, (seed, records)) in per_seed.iter().enumerate() {
        rec.replicates.push(Replicate {
            index: i as u64,
            seed: *seed,
            data: json!({
                "radii": records.iter().map(|r| r.radius).collect::<Vec<_>>(),
                "untrusted": records.iter().filter(|r| !r.trusted).count(),
            }),
        });
    }
    let all: Vec<&RadiusRecord> = per_seed.iter().flat_map(|s| s.1.iter()).collect();
    let total = all.len() as u64;
    let untrusted = all.iter().filter(|r| !r.trusted).count() as u64;
    let mut tails = Vec::new();
    for &m in &cfg.levels {
        let p = Proportion::new(all.iter().filter(|r| r.radius >= m).count() as u64, total);
        rec.summary.push(row([
            ("m", json!(m)),
            ("records", json!(total)),
            ("exceed", json!(p.hits)),
            ("tail", json!(p.p_hat)),
            ("ci_lo", json!(p.ci_lo)),
            ("ci_hi", json!(p.ci_hi)),
            ("untrusted", json!(untrusted)),
        ]));
        tails.push(p);
    }
    rec.checks.push(Check::new(
        "strictly_decreasing",
        tails.windows(2).all(|p| p[1].p_hat < p[0].p_hat),
        format!("tails {:?}", tails.iter().map(|p| p.p_hat).collect::<Vec<_>>()),
    ));
    let (first, last) = (tails.first().unwrap(), tails.last().unwrap());
    rec.checks.push(Check::new(
        "tail_ratio",
        last.p_hat < first.p_hat / 4.0,
        format!("P(R >= last) = {} vs P(R >= first) / 4 = {}", last.p_hat, first.p_hat / 4.0),
    ));
    Ok(rec)
}

/// Monte Carlo `π_ε(M)` over the `(ε, M)` grid with the union bound, and the
/// multiscale inequality for every `M, 10M` pair present in the grid.
pub fn pi_scan(cfg: &ExperimentConfig) -> Result<RunRecord, ExperimentError> {
    cfg.check_common()?;
    cfg.require(!cfg.epsilons.is_empty(), "epsilon grid must be non-empty")?;
    cfg.require(!cfg.windows.is_empty(), "M grid must be non-empty")?;
    cfg.require(cfg.trials > 0, "trials must be positive")?;
    let mut rec = RunRecord::new(cfg);
    let mut all_hold = true;
    let mut estimates = Vec::new();
    let mut idx = 0u64;
    for &eps in &cfg.epsilons {
        for &m in &cfg.windows {
            let master = replicate_seed(cfg.master_seed, idx);
            let est = estimate_pi(
                cfg.dim,
                eps,
                m,
                cfg.reference_horizon,
                cfg.trials,
                master,
                cfg.step_budget,
            )?;
            let ub = check_union_bound(&est);
            all_hold &= ub.holds;
            rec.replicates.push(Replicate {
                index: idx,
                seed: master,
                data: json!({ "epsilon": eps, "m": m, "hits": est.estimate.hits }),
            });
            rec.summary.push(row([
                ("epsilon", json!(eps)),
                ("M", json!(m)),
                ("trials", json!(cfg.trials)),
                ("pi_hat", json!(est.estimate.p_hat)),
                ("ci_lo", json!(est.estimate.ci_lo)),
                ("ci_hi", json!(est.estimate.ci_hi)),
                ("bound", json!(ub.bound)),
            ]));
            estimates.push(est);
            idx += 1;
        }
    }
    rec.checks.push(Check::new(
        "union_bound",
        all_hold,
        "pi_hat <= p_eps (20M+1)^(d-1) + 2 half-width on every grid point",
    ));
    let c = c_geom(cfg.dim) as f64;
    for a in &estimates {
        for b in &estimates {
            if a.epsilon == b.epsilon && b.m == 10 * a.m {
                let r = check_multiscale(&a.estimate, &b.estimate, c, cfg.slack);
                rec.checks.push(Check::new(
                    &format!("multiscale_eps{}_m{}", a.epsilon, a.m),
                    r.verdict != Verdict::Fail,
                    format!("{:?}: pi(10M) in [{}, {}], c pi(M)^2 + slack in [{}, {}]", r.verdict, r.lhs_lo, r.lhs_hi, r.rhs_lo, r.rhs_hi),
                ));
            }
        }
    }
    Ok(rec)
}
