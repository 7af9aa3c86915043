use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::runner::Row;
use super::stats::{quantile_sorted, Summary};
use crate::error::{domain, Error, Result};

pub const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioAtT {
    pub t: f64,
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub frac_within_01: f64,
    pub frac_within_02: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub target: f64,
    pub per_t: Vec<RatioAtT>,
    /// Fraction within 0.2 is non-decreasing in `t`.
    pub monotone: bool,
    pub note: String,
}

fn by_replicate(rows: &[Row]) -> Vec<Vec<&Row>> {
    let mut groups: BTreeMap<usize, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.replicate).or_default().push(r);
    }
    groups
        .into_values()
        .map(|mut g| {
            g.sort_by(|a, b| a.t.total_cmp(&b.t));
            g
        })
        .collect()
}

/// `sqrt(t) W_t / dW_t` on replicates alive at the last time with `dW_t > 0`.
pub fn theorem1_statistic(rows: &[Row]) -> Result<Theorem1Report> {
    let groups = by_replicate(rows);
    let times: Vec<f64> = groups.first().map(|g| g.iter().map(|r| r.t).collect()).unwrap_or_default();
    let (Some(&t_min), Some(&t_max)) = (times.first(), times.last()) else {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    };
    if times.len() < 2 || t_max < 8.0 * t_min {
        return Err(domain("the t grid must span at least a factor of 8"));
    }
    let survivors: Vec<&Vec<&Row>> = groups
        .iter()
        .filter(|g| g.len() == times.len() && g.last().is_some_and(|r| r.survived))
        .collect();
    if survivors.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut per_t = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let mut r: Vec<f64> = survivors
            .iter()
            .filter_map(|g| {
                let row = g[k];
                match (row.w_lambda0, row.dw) {
                    (Some(w), Some(d)) if d > 0.0 => Some(t.sqrt() * w / d),
                    _ => None,
                }
            })
            .collect();
        r.sort_by(f64::total_cmp);
        let n = r.len();
        let frac = |eps: f64| {
            if n == 0 {
                f64::NAN
            } else {
                r.iter().filter(|v| (**v - SQRT_2_OVER_PI).abs() < eps).count() as f64 / n as f64
            }
        };
        per_t.push(RatioAtT {
            t,
            n,
            median: quantile_sorted(&r, 0.5),
            q25: quantile_sorted(&r, 0.25),
            q75: quantile_sorted(&r, 0.75),
            frac_within_01: frac(0.1),
            frac_within_02: frac(0.2),
        });
    }
    let monotone = per_t.windows(2).all(|w| w[1].frac_within_02 >= w[0].frac_within_02);
    Ok(Theorem1Report {
        target: SQRT_2_OVER_PI,
        per_t,
        monotone,
        note: "finite-t proxy with dW_t in place of dW_infinity; tolerances are implementation budgets".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Report {
    pub survivors: usize,
    /// Per surviving replicate: running maximum of `sqrt(t) W_t` over the grid.
    pub running_max: Vec<Vec<f64>>,
    /// Per surviving replicate: running minimum of `lambda0 (L_t + lambda0 t) - log(t)/2`.
    pub running_min_front: Vec<Vec<f64>>,
    /// Fraction of survivors whose running maximum at the last time exceeds its
    /// value at the largest grid time not above a quarter of it.
    pub frac_increasing: Option<f64>,
    pub summary_last_max: Option<Summary>,
    pub note: String,
}

pub fn theorem2_monitor(rows: &[Row], lambda0: f64) -> Theorem2Report {
    let groups = by_replicate(rows);
    let mut running_max = Vec::new();
    let mut running_min_front = Vec::new();
    let mut increased = 0;
    let mut comparable = 0;
    for g in &groups {
        if !g.last().is_some_and(|r| r.survived) {
            continue;
        }
        let mut best = f64::NEG_INFINITY;
        let maxes: Vec<f64> = g
            .iter()
            .map(|r| {
                best = best.max(r.t.sqrt() * r.w_lambda0.unwrap_or(0.0));
                best
            })
            .collect();
        let mut low = f64::INFINITY;
        let mins: Vec<f64> = g
            .iter()
            .map(|r| {
                if let Some(l) = r.l_min {
                    low = low.min(lambda0 * (l + lambda0 * r.t) - 0.5 * r.t.ln());
                }
                low
            })
            .collect();
        let t_last = g.last().map_or(0.0, |r| r.t);
        if let Some(k) = g.iter().rposition(|r| r.t <= 0.25 * t_last) {
            comparable += 1;
            if maxes[maxes.len() - 1] > maxes[k] {
                increased += 1;
            }
        }
        running_max.push(maxes);
        running_min_front.push(mins);
    }
    let last: Vec<f64> = running_max.iter().filter_map(|m| m.last().copied()).collect();
    Theorem2Report {
        survivors: running_max.len(),
        frac_increasing: (comparable > 0).then(|| increased as f64 / comparable as f64),
        summary_last_max: (!last.is_empty()).then(|| Summary::of(&last)),
        running_max,
        running_min_front,
        note: "descriptive only: almost-sure limsup statements cannot be verified from finite runs".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(rep: usize, t: f64, w: f64, dw: f64, survived: bool) -> Row {
        Row {
            replicate: rep,
            t,
            w_lambda0: Some(w),
            dw: Some(dw),
            survived,
            ..Row::default()
        }
    }

    #[test]
    fn single_t_is_rejected() {
        let rows = vec![row(0, 1.0, 1.0, 1.0, true)];
        assert!(theorem1_statistic(&rows).is_err());
        let rows = vec![row(0, 1.0, 1.0, 1.0, true), row(0, 4.0, 1.0, 1.0, true)];
        assert!(theorem1_statistic(&rows).is_err());
    }

    #[test]
    fn ratio_and_survivor_filter() {
        let mut rows = Vec::new();
        for rep in 0..4 {
            let alive = rep != 3;
            rows.push(row(rep, 1.0, 0.8, 1.0, alive));
            rows.push(row(rep, 9.0, 0.8 / 3.0, 1.0, alive));
        }
        let r = theorem1_statistic(&rows).unwrap();
        assert_eq!(r.per_t[0].n, 3);
        assert!((r.per_t[1].median - 0.8).abs() < 1e-12);
        assert_eq!(r.per_t[1].frac_within_01, 1.0);
        assert!(r.monotone);
        let dead: Vec<Row> = rows.iter().cloned().map(|mut r| {
            r.survived = false;
            r
        }).collect();
        assert!(matches!(theorem1_statistic(&dead), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn monitor_excludes_extinct_and_is_monotone() {
        let mut rows = Vec::new();
        for (k, t) in [1.0, 2.0, 4.0, 8.0].into_iter().enumerate() {
            rows.push(Row {
                l_min: Some(-1.0),
                ..row(0, t, 1.0 / (k as f64 + 1.0), 1.0, true)
            });
            rows.push(row(1, t, 0.0, 0.0, false));
        }
        let r = theorem2_monitor(&rows, 2f64.sqrt());
        assert_eq!(r.survivors, 1);
        assert!(r.running_max[0].windows(2).all(|w| w[1] >= w[0]));
        assert!(r.running_min_front[0].windows(2).all(|w| w[1] <= w[0]));
        assert!(r.frac_increasing.is_some());
    }
}
