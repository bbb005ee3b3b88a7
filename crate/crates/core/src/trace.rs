//! Per-iteration run traces, the stable CSV schema, min-max quality
//! normalization across algorithm pools, and the quality ratio used in
//! summary tables.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Assignment, FunctionId};
use crate::utility::Utility;

pub const CSV_HEADER: &str =
    "k,sim_time,wall_ms,lb,ub,best_lb,best_ub,rho,msgs,payload,max_payload,ccs";

/// One iteration record. Counters are cumulative; `max_payload` is a running
/// maximum. Upper-bound columns are absent for algorithms that do not bound.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub k: u64,
    pub sim_time: u64,
    pub wall_ms: u64,
    pub lb: Utility,
    pub ub: Option<Utility>,
    pub best_lb: Utility,
    pub best_ub: Option<Utility>,
    pub rho: Option<f64>,
    pub msgs: u64,
    pub payload: u64,
    pub max_payload: u64,
    pub ccs: u64,
}

#[derive(Clone, Debug, Default)]
pub struct RunTrace {
    pub algo: String,
    pub rows: Vec<TraceRow>,
    pub best_solution: Option<Assignment>,
    /// Relaxation-graph edges per iteration (k >= 1).
    pub tree_edges: BTreeMap<u64, Vec<FunctionId>>,
    pub first_feasible_k: Option<u64>,
}

impl RunTrace {
    pub fn final_best_lb(&self) -> Utility {
        self.rows
            .last()
            .map(|r| r.best_lb)
            .unwrap_or(Utility::NegInf)
    }

    pub fn final_best_ub(&self) -> Option<Utility> {
        self.rows.last().and_then(|r| r.best_ub)
    }

    /// Guaranteed approximation ratio: smallest upper bound over largest
    /// lower bound, defined once the lower bound is positive.
    pub fn rho(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.rho)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let opt_u = |u: Option<Utility>| u.map(|x| x.to_string()).unwrap_or_default();
            let opt_f = |f: Option<f64>| f.map(|x| x.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.k,
                r.sim_time,
                r.wall_ms,
                r.lb,
                opt_u(r.ub),
                r.best_lb,
                opt_u(r.best_ub),
                opt_f(r.rho),
                r.msgs,
                r.payload,
                r.max_payload,
                r.ccs
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<RunTrace> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or(Error::Trace("empty trace file".into()))?;
        if header != CSV_HEADER {
            return Err(Error::Trace(format!("unexpected header: {header}")));
        }
        let parse_utility = |s: &str| -> Result<Utility> {
            if s == "-inf" {
                Ok(Utility::NegInf)
            } else {
                s.parse::<f64>()
                    .map(Utility::Finite)
                    .map_err(|e| Error::Trace(format!("bad utility {s}: {e}")))
            }
        };
        let mut rows = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 12 {
                return Err(Error::Trace(format!(
                    "row {} has {} columns, expected 12",
                    lineno + 2,
                    cols.len()
                )));
            }
            let int = |s: &str| -> Result<u64> {
                s.parse()
                    .map_err(|e| Error::Trace(format!("bad integer {s}: {e}")))
            };
            rows.push(TraceRow {
                k: int(cols[0])?,
                sim_time: int(cols[1])?,
                wall_ms: int(cols[2])?,
                lb: parse_utility(cols[3])?,
                ub: if cols[4].is_empty() {
                    None
                } else {
                    Some(parse_utility(cols[4])?)
                },
                best_lb: parse_utility(cols[5])?,
                best_ub: if cols[6].is_empty() {
                    None
                } else {
                    Some(parse_utility(cols[6])?)
                },
                rho: if cols[7].is_empty() {
                    None
                } else {
                    Some(
                        cols[7]
                            .parse()
                            .map_err(|e| Error::Trace(format!("bad rho: {e}")))?,
                    )
                },
                msgs: int(cols[8])?,
                payload: int(cols[9])?,
                max_payload: int(cols[10])?,
                ccs: int(cols[11])?,
            });
        }
        Ok(RunTrace {
            rows,
            ..RunTrace::default()
        })
    }

    pub fn read_csv(path: &Path) -> Result<RunTrace> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Normalized lower/upper-bound series for a pool of runs on one instance:
/// 1 is the pool's best value in the bucket, 0 the worst, ties map to 1.
#[derive(Clone, Debug)]
pub struct NormalizedSeries {
    pub buckets: Vec<u64>,
    pub lb: BTreeMap<String, Vec<f64>>,
    pub ub: BTreeMap<String, Vec<f64>>,
}

fn value_at(rows: &[TraceRow], t: u64, pick: impl Fn(&TraceRow) -> Option<Utility>) -> Option<f64> {
    let mut chosen: Option<Utility> = None;
    for r in rows {
        if r.sim_time <= t {
            if let Some(v) = pick(r) {
                chosen = Some(v);
            }
        } else {
            break;
        }
    }
    let chosen = chosen.or_else(|| rows.first().and_then(&pick))?;
    Some(chosen.finite().unwrap_or(f64::NEG_INFINITY))
}

fn min_max_normalize(values: &[(String, f64)], higher_is_better: bool) -> BTreeMap<String, f64> {
    let finite: Vec<f64> = values
        .iter()
        .map(|(_, v)| *v)
        .filter(|v| v.is_finite())
        .collect();
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|(name, v)| {
            let norm = if finite.is_empty() || (hi - lo).abs() < 1e-12 {
                1.0 // tie convention
            } else if !v.is_finite() {
                0.0
            } else if higher_is_better {
                (v - lo) / (hi - lo)
            } else {
                (hi - v) / (hi - lo)
            };
            (name.clone(), norm)
        })
        .collect()
}

/// Fixed log-spaced bucketing over simulated time; per bucket, min-max
/// normalization across the pool, separately for lower and upper bounds.
pub fn normalize_quality(
    traces: &[(String, &RunTrace)],
    bucket_count: usize,
) -> Result<NormalizedSeries> {
    if traces.len() < 2 {
        return Err(Error::Trace(
            "normalization needs a pool of at least two traces".into(),
        ));
    }
    if let Some((name, _)) = traces.iter().find(|(_, t)| t.rows.is_empty()) {
        return Err(Error::Trace(format!("trace {name} has no rows")));
    }
    let t_lo = traces
        .iter()
        .filter_map(|(_, t)| t.rows.first().map(|r| r.sim_time))
        .min()
        .unwrap_or(0)
        .max(1);
    let t_hi = traces
        .iter()
        .filter_map(|(_, t)| t.rows.last().map(|r| r.sim_time))
        .max()
        .unwrap_or(1)
        .max(t_lo);

    let buckets: Vec<u64> = if bucket_count <= 1 || t_hi == t_lo {
        vec![t_hi]
    } else {
        let ratio = (t_hi as f64 / t_lo as f64).powf(1.0 / (bucket_count - 1) as f64);
        let mut out: Vec<u64> = (0..bucket_count)
            .map(|i| (t_lo as f64 * ratio.powi(i as i32)).round() as u64)
            .collect();
        out.dedup();
        out
    };

    let mut lb: BTreeMap<String, Vec<f64>> = traces
        .iter()
        .map(|(n, _)| (n.clone(), Vec::new()))
        .collect();
    let mut ub: BTreeMap<String, Vec<f64>> = traces
        .iter()
        .filter(|(_, t)| t.rows.iter().any(|r| r.best_ub.is_some()))
        .map(|(n, _)| (n.clone(), Vec::new()))
        .collect();

    for &t in &buckets {
        let lb_vals: Vec<(String, f64)> = traces
            .iter()
            .filter_map(|(name, tr)| {
                value_at(&tr.rows, t, |r| Some(r.best_lb)).map(|v| (name.clone(), v))
            })
            .collect();
        for (name, norm) in min_max_normalize(&lb_vals, true) {
            lb.get_mut(&name).unwrap().push(norm);
        }
        let ub_vals: Vec<(String, f64)> = traces
            .iter()
            .filter(|(name, _)| ub.contains_key(name))
            .filter_map(|(name, tr)| {
                value_at(&tr.rows, t, |r| r.best_ub).map(|v| (name.clone(), v))
            })
            .collect();
        for (name, norm) in min_max_normalize(&ub_vals, false) {
            ub.get_mut(&name).unwrap().push(norm);
        }
    }
    Ok(NormalizedSeries { buckets, lb, ub })
}

/// Quality ratio of each run against the best in the pool, in (0, 1] with the
/// pool best at exactly 1.
pub fn quality_ratios(finals: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let best = finals.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    finals
        .iter()
        .map(|(name, v)| {
            let eps = if best > 0.0 { v / best } else { 1.0 };
            (name.clone(), eps)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(values: &[(u64, f64, Option<f64>)]) -> RunTrace {
        let rows = values
            .iter()
            .map(|(t, lb, ub)| TraceRow {
                k: *t,
                sim_time: *t,
                wall_ms: 0,
                lb: Utility::Finite(*lb),
                ub: ub.map(Utility::Finite),
                best_lb: Utility::Finite(*lb),
                best_ub: ub.map(Utility::Finite),
                rho: None,
                msgs: 0,
                payload: 0,
                max_payload: 0,
                ccs: 0,
            })
            .collect();
        RunTrace {
            algo: "synthetic".into(),
            rows,
            ..RunTrace::default()
        }
    }

    #[test]
    fn csv_round_trip_preserves_rows() {
        let trace = synthetic(&[(1, 5.0, Some(20.0)), (10, 8.5, Some(12.0))]);
        let text = trace.to_csv();
        assert!(text.starts_with(CSV_HEADER));
        let parsed = RunTrace::from_csv(&text).unwrap();
        assert_eq!(parsed.rows, trace.rows);
    }

    #[test]
    fn identical_pool_normalizes_to_one() {
        let a = synthetic(&[(1, 5.0, Some(9.0)), (100, 7.0, Some(8.0))]);
        let b = a.clone();
        let series = normalize_quality(&[("a".into(), &a), ("b".into(), &b)], 8).unwrap();
        for vals in series.lb.values().chain(series.ub.values()) {
            assert!(vals.iter().all(|v| (*v - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn two_algorithm_pool_maps_better_to_one() {
        let good = synthetic(&[(1, 10.0, Some(12.0)), (100, 10.0, Some(12.0))]);
        let bad = synthetic(&[(1, 4.0, Some(30.0)), (100, 4.0, Some(30.0))]);
        let series = normalize_quality(&[("good".into(), &good), ("bad".into(), &bad)], 4).unwrap();
        assert!(series.lb["good"].iter().all(|v| *v == 1.0));
        assert!(series.lb["bad"].iter().all(|v| *v == 0.0));
        // smaller upper bound is the better one
        assert!(series.ub["good"].iter().all(|v| *v == 1.0));
        assert!(series.ub["bad"].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn three_trace_pool_matches_hand_computation() {
        let a = synthetic(&[(1, 2.0, None), (10, 2.0, None)]);
        let b = synthetic(&[(1, 6.0, None), (10, 6.0, None)]);
        let c = synthetic(&[(1, 10.0, None), (10, 10.0, None)]);
        let series =
            normalize_quality(&[("a".into(), &a), ("b".into(), &b), ("c".into(), &c)], 2).unwrap();
        for i in 0..series.buckets.len() {
            assert!((series.lb["a"][i] - 0.0).abs() < 1e-12);
            assert!((series.lb["b"][i] - 0.5).abs() < 1e-12);
            assert!((series.lb["c"][i] - 1.0).abs() < 1e-12);
        }
        assert!(series.ub.is_empty());
    }

    #[test]
    fn pool_of_one_is_rejected() {
        let a = synthetic(&[(1, 2.0, None)]);
        assert!(normalize_quality(&[("a".into(), &a)], 4).is_err());
    }

    #[test]
    fn quality_ratio_pins_pool_best_to_one() {
        let finals: BTreeMap<String, f64> = [("x".to_string(), 80.0), ("y".to_string(), 100.0)]
            .into_iter()
            .collect();
        let eps = quality_ratios(&finals);
        assert!((eps["y"] - 1.0).abs() < 1e-12);
        assert!((eps["x"] - 0.8).abs() < 1e-12);
        assert!(eps.values().all(|e| *e > 0.0 && *e <= 1.0));
    }
}
