use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{fan_out, row, Check, ExperimentConfig, ExperimentError, Replicate, RunRecord};
use crate::engine::{build_aggregate, build_ordered_with, FoldedWalks, SimConfig, StreamWalks};
use crate::lattice::Site;
use crate::rng::replicate_seed;
use crate::stats::two_proportions;

/// Second arm of the Abelian comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbelianArm {
    /// Level-ordered `A*_n[M]`.
    Ordered,
    /// Level-ordered build with folded walks; must fail the test.
    Folded,
}

/// Per-site occupation frequencies of `A_n[M]` against the second arm, on
/// independent seeds, with a Bonferroni-adjusted 2x2 chi-square per site.
pub fn abelian_scan(cfg: &ExperimentConfig, arm: AbelianArm) -> Result<RunRecord, ExperimentError> {
    cfg.check_common()?;
    cfg.require(cfg.windows.len() == 1, "abelian takes exactly one window M")?;
    let m = cfg.windows[0];
    let n = cfg.seeds;

    let arms = fan_out(cfg, |i, seed| {
        let mut a = SimConfig::new(cfg.dim, m, cfg.horizon, seed);
        a.step_budget = cfg.step_budget;
        let timed = build_aggregate(&a)?;
        let mut b = a;
        b.seed = replicate_seed(cfg.master_seed, n + i);
        let second = match arm {
            AbelianArm::Ordered => build_ordered_with(&b, &StreamWalks { seed: b.seed })?,
            AbelianArm::Folded => build_ordered_with(
                &b,
                &FoldedWalks {
                    inner: StreamWalks { seed: b.seed },
                },
            )?,
        };
        Ok((timed.site_set(), second.site_set(), b.seed))
    })?;

    let mut count_a: BTreeMap<Site, u64> = BTreeMap::new();
    let mut count_b: BTreeMap<Site, u64> = BTreeMap::new();
    let mut rec = RunRecord::new(cfg);
    for (index, seed, (sa, sb, seed_b)) in &arms {
        for s in sa {
            *count_a.entry(*s).or_default() += 1;
        }
        for s in sb {
            *count_b.entry(*s).or_default() += 1;
        }
        rec.replicates.push(Replicate {
            index: *index,
            seed: *seed,
            data: json!({ "seed_b": seed_b, "size_a": sa.len(), "size_b": sb.len() }),
        });
    }
    let sites: BTreeSet<Site> = count_a.keys().chain(count_b.keys()).copied().collect();
    let mut tests = 0u64;
    let mut min_p = 1.0f64;
    let mut max_stat = 0.0f64;
    let mut worst: Option<Site> = None;
    for s in &sites {
        let a = count_a.get(s).copied().unwrap_or(0);
        let b = count_b.get(s).copied().unwrap_or(0);
        // equal arm sizes: every expected cell is half a column total
        let min_expected = ((a + b) as f64 / 2.0).min((2 * n - a - b) as f64 / 2.0);
        if min_expected < 5.0 {
            continue;
        }
        tests += 1;
        let t = two_proportions(a, n, b, n);
        if t.statistic > max_stat {
            max_stat = t.statistic;
            worst = Some(*s);
        }
        min_p = min_p.min(t.p_value);
        rec.summary.push(row([
            ("site", json!(s.coords())),
            ("freq_time_ordered", json!(a as f64 / n as f64)),
            ("freq_other", json!(b as f64 / n as f64)),
            ("chi2", json!(t.statistic)),
            ("p_value", json!(t.p_value)),
        ]));
    }
    let adjusted = (min_p * tests as f64).min(1.0);
    rec.checks.push(Check::new(
        "bonferroni",
        adjusted >= cfg.alpha,
        format!(
            "{tests} sites tested, max chi2 {max_stat} at {:?}, adjusted p = {adjusted}",
            worst.map(|s| s.coords().to_vec())
        ),
    ));
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(m: u32, seeds: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new("abelian");
        c.windows = vec![m];
        c.horizon = 2.0;
        c.seeds = seeds;
        c.master_seed = 99;
        c
    }

    #[test]
    fn single_source_passes() {
        let rec = abelian_scan(&cfg(0, 400), AbelianArm::Ordered).unwrap();
        assert!(rec.passed(), "{:?}", rec.checks);
    }

    #[test]
    fn folded_control_fails() {
        let rec = abelian_scan(&cfg(1, 400), AbelianArm::Folded).unwrap();
        assert!(!rec.passed());
    }

    #[test]
    fn arms_use_disjoint_seeds() {
        let rec = abelian_scan(&cfg(1, 5), AbelianArm::Ordered).unwrap();
        let a: BTreeSet<u64> = rec.replicates.iter().map(|r| r.seed).collect();
        let b: BTreeSet<u64> = rec
            .replicates
            .iter()
            .map(|r| r.data["seed_b"].as_u64().unwrap())
            .collect();
        assert!(a.is_disjoint(&b));
    }
}
