//! Evaluation metrics, queue measures of a deployment and benchmark tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evcec::{demand_rates, Deployment};
use crate::instance::{CoverageSets, Instance};
use crate::queueing::{mms_measures, QueueMeasures};

/// Slack allowed when checking the service level of an open station.
pub const SERVICE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationQueue {
    pub node: usize,
    pub location: usize,
    pub lambda: f64,
    pub posts: usize,
    pub measures: QueueMeasures,
    pub service_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueReport {
    pub b: u32,
    pub alpha: f64,
    pub stations: Vec<StationQueue>,
    /// Probability-weighted mean wait over open stations, minutes.
    pub avg_wait_min: f64,
    /// Probability-weighted mean number waiting over open stations.
    pub avg_queue_len: f64,
    /// `(node, location)` of stations whose arrival rate reaches capacity.
    pub unstable: Vec<(usize, usize)>,
    /// Every open station meets the service level.
    pub service_ok: bool,
}

/// Queue measures of every open station under the instance's queue
/// settings with threshold `b`. Averages weight each open station by its
/// node probability; closed stations are left out.
pub fn queue_report(inst: &Instance, dep: &Deployment, b: u32) -> Result<QueueReport> {
    let cov = CoverageSets::new(inst);
    let e = inst.attractions();
    let alpha = inst.queue.alpha;
    let mut stations = Vec::new();
    let mut unstable = Vec::new();
    let (mut wsum, mut wait, mut len) = (0.0, 0.0, 0.0);
    for n in 0..inst.n_nodes() {
        let lambda = demand_rates(inst, &cov, &e, &dep.open[n], n)?;
        for j in 0..inst.n_locations() {
            if !dep.open[n][j] {
                continue;
            }
            let posts = dep.posts[n][j];
            if posts == 0 {
                return Err(Error::Infeasible(format!("open station {j} at node {n} has no posts")));
            }
            let measures = mms_measures(lambda[j], inst.queue.mu, posts, b)?;
            if !measures.stable {
                unstable.push((n, j));
            }
            let phi = inst.tree[n].prob;
            wsum += phi;
            wait += phi * measures.wq_minutes();
            len += phi * measures.lq;
            stations.push(StationQueue {
                node: n,
                location: j,
                lambda: lambda[j],
                posts,
                measures,
                service_ok: measures.p_le_b >= alpha - SERVICE_TOL,
            });
        }
    }
    if !unstable.is_empty() {
        log::warn!("{} unstable station(s), e.g. node {} location {}", unstable.len(), unstable[0].0, unstable[0].1);
    }
    let (avg_wait_min, avg_queue_len) = if wsum > 0.0 { (wait / wsum, len / wsum) } else { (0.0, 0.0) };
    Ok(QueueReport {
        b,
        alpha,
        service_ok: stations.iter().all(|s| s.service_ok),
        stations,
        avg_wait_min,
        avg_queue_len,
        unstable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Time saving `(t* - t) / t*`, as a fraction.
    pub ts: f64,
    /// `(z - z*) / z`.
    pub gap: f64,
    /// `(z - lb) / z`, when the algorithm produced a bound.
    pub gap_lb: Option<f64>,
}

pub fn compare_metrics(t_star: f64, z_star: f64, t_alg: f64, z_alg: f64, lb_alg: Option<f64>) -> Metrics {
    Metrics {
        ts: (t_star - t_alg) / t_star,
        gap: (z_alg - z_star) / z_alg,
        gap_lb: lb_alg.map(|lb| (z_alg - lb) / z_alg),
    }
}

/// A fraction as a percentage with one decimal, e.g. `68.0%`.
pub fn format_pct(fraction: f64) -> String {
    format!("{:.1}%", fraction * 100.0)
}

/// One benchmark cell. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: String,
    pub algo: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub b: u32,
    pub alpha: f64,
    pub t_s: f64,
    pub z: f64,
    pub lb: Option<f64>,
    pub gap: Option<f64>,
    pub ts_pct: Option<f64>,
    pub avg_wait_min: f64,
    pub avg_queue_len: f64,
    pub service_ok: bool,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "instance_id",
    "algo",
    "M",
    "b",
    "alpha",
    "t_s",
    "z",
    "lb",
    "gap",
    "ts_pct",
    "avg_wait_min",
    "avg_queue_len",
    "service_ok",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub csv: String,
    pub text: String,
    /// Rows whose objective exceeds the same instance and algorithm at a
    /// smaller threshold.
    pub monotonicity_violations: Vec<ResultRow>,
}

fn sort_key(r: &ResultRow) -> (String, usize, u32, String) {
    (r.instance_id.clone(), r.m, r.b, r.algo.clone())
}

/// Rows that break "objective nonincreasing in b" for their
/// `(instance, algo, M)` series.
pub fn monotonicity_violations(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut series: BTreeMap<(String, String, usize), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        series.entry((r.instance_id.clone(), r.algo.clone(), r.m)).or_default().push(r);
    }
    let mut bad = Vec::new();
    for rs in series.values_mut() {
        rs.sort_by_key(|r| r.b);
        for w in rs.windows(2) {
            if w[1].b > w[0].b && w[1].z > w[0].z + 1e-6 * w[0].z.abs().max(1.0) {
                bad.push(w[1].clone());
            }
        }
    }
    bad
}

pub fn to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("unexpected header {headers:?}"),
        });
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    let (line, message) = (e.position().map_or(0, |p| p.line() as usize), e.to_string());
    Error::Parse {
        line,
        column: 0,
        message,
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

/// Sorts rows by (instance, M, b, algo) and renders them as CSV and as an
/// aligned text table. The text adds the gap against the exact reference
/// (`mip`, else `bp`) in the same cell measured over `z*`, the queue
/// threshold next to the mean queue length, and a monotonicity flag.
pub fn render_tables(rows: &[ResultRow]) -> Result<RenderedReport> {
    let mut rows = rows.to_vec();
    rows.sort_by_key(sort_key);
    let csv = to_csv(&rows)?;
    let bad = monotonicity_violations(&rows);

    let mut reference: BTreeMap<(String, usize, u32), f64> = BTreeMap::new();
    for algo in ["bp", "mip"] {
        for r in rows.iter().filter(|r| r.algo == algo) {
            reference.insert((r.instance_id.clone(), r.m, r.b), r.z);
        }
    }
    let header = [
        "instance", "algo", "M", "b", "alpha", "t_s", "z", "lb", "gap", "gap_z*", "ts", "Wq_min", "Lq", "svc", "z(b)",
    ];
    let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for r in &rows {
        let z_star = reference.get(&(r.instance_id.clone(), r.m, r.b)).copied();
        let mono_bad = bad.iter().any(|x| sort_key(x) == sort_key(r));
        cells.push(vec![
            r.instance_id.clone(),
            r.algo.clone(),
            r.m.to_string(),
            r.b.to_string(),
            format!("{}", r.alpha),
            format!("{:.2}", r.t_s),
            format!("{:.2}", r.z),
            opt(r.lb, 2),
            r.gap.map_or_else(|| "-".into(), format_pct),
            z_star.map_or_else(|| "-".into(), |zs| format_pct((r.z - zs) / zs)),
            r.ts_pct.map_or_else(|| "-".into(), |t| format!("{t:.1}%")),
            format!("{:.2}", r.avg_wait_min),
            format!("{:.2}", r.avg_queue_len),
            if r.service_ok { "ok" } else { "FAIL" }.into(),
            if mono_bad { "up" } else { "ok" }.into(),
        ]);
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for row in &cells {
        let line: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        let _ = writeln!(text, "{}", line.join("  ").trim_end());
    }
    Ok(RenderedReport {
        csv,
        text,
        monotonicity_violations: bad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, GenerateParams};
    use crate::heuristic::best_greedy;
    use proptest::prelude::*;

    #[test]
    fn published_metric_rows() {
        let m = compare_metrics(194.0, 1.0, 62.0, 1.0, None);
        assert_eq!(format_pct(m.ts), "68.0%");
        let m = compare_metrics(1.0, 68_841.0, 1.0, 68_159.0, Some(60_000.0));
        assert_eq!(format_pct(m.gap), "-1.0%");
        assert!(m.gap_lb.unwrap() > 0.0);
        assert_eq!(compare_metrics(5.0, 7.0, 5.0, 7.0, None).gap, 0.0);
    }

    #[test]
    fn congestion_solution_meets_service_level() {
        let inst = generate(&GenerateParams::tiny(), 3).unwrap();
        let dep = best_greedy(&inst).unwrap().deployment;
        let rep = queue_report(&inst, &dep, inst.queue.b).unwrap();
        assert!(rep.service_ok);
        assert!(rep.unstable.is_empty());
        assert!(rep.stations.iter().all(|s| s.measures.p_le_b >= 0.9 - SERVICE_TOL));
        let open: usize = dep.open.iter().flatten().filter(|&&o| o).count();
        assert_eq!(rep.stations.len(), open);
    }

    #[test]
    fn undersized_station_is_flagged() {
        let inst = generate(&GenerateParams::tiny(), 3).unwrap();
        let mut dep = best_greedy(&inst).unwrap().deployment;
        for n in 0..dep.n_nodes() {
            for k in dep.posts[n].iter_mut() {
                *k = (*k).min(1);
            }
        }
        // Crank demand so one post cannot keep up.
        let mut hot = inst.clone();
        for node in &mut hot.tree {
            node.w.iter_mut().for_each(|w| *w *= 50.0);
        }
        let rep = queue_report(&hot, &dep, 0).unwrap();
        assert!(!rep.service_ok);
        assert!(!rep.unstable.is_empty());
        assert!(rep.avg_wait_min.is_infinite());
    }

    #[test]
    fn empty_report_is_header_only() {
        let r = render_tables(&[]).unwrap();
        assert_eq!(r.csv.trim(), CSV_COLUMNS.join(","));
        assert_eq!(r.text.lines().count(), 1);
    }

    fn row(id: &str, algo: &str, b: u32, z: f64) -> ResultRow {
        ResultRow {
            instance_id: id.into(),
            algo: algo.into(),
            m: 8,
            b,
            alpha: 0.9,
            t_s: 1.5,
            z,
            lb: None,
            gap: Some(0.0),
            ts_pct: None,
            avg_wait_min: 0.25,
            avg_queue_len: 0.1,
            service_ok: true,
        }
    }

    #[test]
    fn rows_sorted_and_monotonicity_flagged() {
        let rows = vec![row("b", "mip", 1, 9.0), row("a", "mip", 1, 12.0), row("a", "mip", 0, 10.0), row("a", "heuristic", 0, 11.0)];
        let r = render_tables(&rows).unwrap();
        let back = from_csv(&r.csv).unwrap();
        let order: Vec<(&str, u32, &str)> = back.iter().map(|r| (r.instance_id.as_str(), r.b, r.algo.as_str())).collect();
        assert_eq!(order, vec![("a", 0, "heuristic"), ("a", 0, "mip"), ("a", 1, "mip"), ("b", 1, "mip")]);
        assert_eq!(r.monotonicity_violations.len(), 1);
        assert_eq!(r.monotonicity_violations[0].z, 12.0);
        assert_eq!(r.text.lines().count(), 5);
        // gap against z* for the heuristic row: (11 - 10) / 10.
        assert!(r.text.lines().nth(1).unwrap().contains("10.0%"));
    }

    proptest! {
        #[test]
        fn csv_round_trip(
            z in prop::collection::vec(0.0f64..1e7, 0..6),
            lb in prop::option::of(-1e3f64..1e6),
            ok in any::<bool>(),
        ) {
            let rows: Vec<ResultRow> = z
                .iter()
                .enumerate()
                .map(|(i, &z)| ResultRow { lb, service_ok: ok, ts_pct: Some(z / 3.0), ..row(&format!("inst,{i}"), "bp", i as u32, z) })
                .collect();
            let text = to_csv(&rows).unwrap();
            prop_assert_eq!(from_csv(&text).unwrap(), rows);
        }
    }
}
