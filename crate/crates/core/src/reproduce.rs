//! Reproduction harness for the published tables.
//!
//! Replications are independent: replication `i` draws all of its
//! randomness from `derive_seed(seed, "replication/i")`, so results do not
//! depend on the number of worker threads.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::college::{self, CollegeConfig, CollegeRun};
use crate::error::{Error, Result};
use crate::fairness::{closed_form_fair_utility_medical, corresponding_fair_utility};
use crate::rng::derive_seed;
use crate::scenarios::{medical, medical_family};
use crate::stats::{mean, quantile_type7};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TableId {
    T1,
    T2,
    T3,
    #[serde(rename = "F3_aggregates")]
    F3Aggregates,
}

impl TableId {
    pub const ALL: [TableId; 4] = [TableId::T1, TableId::T2, TableId::T3, TableId::F3Aggregates];

    pub fn as_str(&self) -> &'static str {
        match self {
            TableId::T1 => "T1",
            TableId::T2 => "T2",
            TableId::T3 => "T3",
            TableId::F3Aggregates => "F3_aggregates",
        }
    }

    /// Replications used when none are requested.
    pub fn default_replications(&self) -> usize {
        match self {
            TableId::T3 => 1,
            _ => 100,
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TableId::ALL.into_iter().find(|t| t.as_str().eq_ignore_ascii_case(s)).ok_or_else(|| {
            Error::InvalidParameter(format!("unknown table `{s}` (expected T1, T2, T3 or F3_aggregates)"))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproduceConfig {
    pub replications: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool. Never affects results.
    #[serde(skip)]
    pub jobs: Option<usize>,
}

impl ReproduceConfig {
    pub fn new(replications: usize, seed: u64) -> Self {
        ReproduceConfig { replications, seed, jobs: None }
    }
}

/// One reproduced quantity against its published target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub quantity: String,
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
    /// The published point value.
    pub paper: f64,
    /// Acceptance interval for `mean`.
    pub low: f64,
    pub high: f64,
    pub pass: bool,
}

impl Comparison {
    fn new(quantity: &str, values: &[f64], paper: f64, low: f64, high: f64) -> Self {
        let m = mean(values);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Comparison {
            quantity: quantity.to_string(),
            mean: m,
            q05: quantile_type7(&sorted, 0.05),
            q95: quantile_type7(&sorted, 0.95),
            paper,
            low,
            high,
            pass: m > low && m < high,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub table: TableId,
    pub replications: usize,
    pub seed: u64,
    pub rows: Vec<Comparison>,
    pub pass: bool,
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidParameter("--jobs must be at least 1".into())),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn replicate<T: Send>(config: &ReproduceConfig, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    if config.replications == 0 {
        return Err(Error::InvalidParameter("need at least one replication".into()));
    }
    let seeds: Vec<u64> =
        (0..config.replications).map(|i| derive_seed(config.seed, &format!("replication/{i}"))).collect();
    in_pool(config.jobs, || seeds.par_iter().map(|s| f(*s)).collect::<Result<Vec<T>>>())?
}

/// Sample size and tolerance of the medical-staff penalty runs.
pub const MEDICAL_N: usize = 10_000;
pub const MEDICAL_EPS: f64 = 1e-4;

/// Weights from the penalty method on the medical model, one vector per
/// replication.
pub fn medical_weights(theta: [f64; 6], n: usize, eps: f64, config: &ReproduceConfig) -> Result<Vec<[f64; 3]>> {
    let (scm, utility, f) = medical(theta)?;
    let family = medical_family();
    replicate(config, |seed| {
        let r = corresponding_fair_utility(&scm, &utility, &f, &family, n, seed, eps)?;
        Ok([r.w[0], r.w[1], r.w[2]])
    })
}

fn medical_table(table: TableId, config: &ReproduceConfig) -> Result<Vec<Comparison>> {
    let (theta, bounds): ([f64; 6], [(f64, f64); 3]) = match table {
        TableId::T1 => ([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], [(-15.62, -14.46), (4.98, 5.02), (7.43, 7.55)]),
        _ => ([6.0, 5.0, 4.0, 3.0, 2.0, 1.0], [(-48.78, -47.16), (1.99, 2.01), (4.00, 4.11)]),
    };
    let exact = closed_form_fair_utility_medical(theta)?;
    let ws = medical_weights(theta, MEDICAL_N, MEDICAL_EPS, config)?;
    Ok(["w1", "w2", "w3"]
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = ws.iter().map(|w| w[j]).collect();
            Comparison::new(name, &col, exact[j], bounds[j].0, bounds[j].1)
        })
        .collect())
}

/// Published single-realization counts: (original, modified).
const TABLE3: [(&str, f64, f64); 3] = [
    ("graduating", 25_578.0, 25_517.0),
    ("minority_admitted", 11_334.0, 13_496.0),
    ("minority_graduating", 5_073.0, 5_525.0),
];

/// Relative band for the single-realization counts.
const TABLE3_BAND: f64 = 0.05;

const W_PAPER: f64 = -0.071;
const W_BAND: f64 = 0.02;

fn table3(config: &ReproduceConfig) -> Result<Vec<Comparison>> {
    let run = college::run(&CollegeConfig::default(), config.seed)?;
    let counts = |a: &college::Attainment| [a.graduating, a.minority_admitted, a.minority_graduating];
    let (orig, modi) = (counts(&run.original), counts(&run.modified));
    let mut rows = Vec::new();
    for (j, (name, p_orig, p_mod)) in TABLE3.iter().enumerate() {
        for (suffix, got, paper) in [("original", orig[j], *p_orig), ("modified", modi[j], *p_mod)] {
            let v = [got as f64];
            let band = TABLE3_BAND * paper;
            rows.push(Comparison::new(&format!("{name}_{suffix}"), &v, paper, paper - band, paper + band));
        }
        let delta = modi[j] as f64 - orig[j] as f64;
        let paper = p_mod - p_orig;
        let (low, high) = if paper > 0.0 { (0.0, f64::INFINITY) } else { (f64::NEG_INFINITY, 0.0) };
        rows.push(Comparison::new(&format!("{name}_change_sign"), &[delta], paper, low, high));
    }
    rows.push(Comparison::new("w", &[run.w], W_PAPER, W_PAPER - W_BAND, W_PAPER + W_BAND));
    Ok(rows)
}

/// Per-replication college runs.
pub fn college_runs(config: &ReproduceConfig) -> Result<Vec<CollegeRun>> {
    let cc = CollegeConfig::default();
    replicate(config, |seed| college::run(&cc, seed))
}

fn f3(config: &ReproduceConfig) -> Result<Vec<Comparison>> {
    let runs = college_runs(config)?;
    let col = |f: fn(&CollegeRun) -> f64| runs.iter().map(f).collect::<Vec<f64>>();
    Ok(vec![
        Comparison::new("fewer_graduates", &col(|r| r.fewer_graduates() as f64), 77.0, 34.0, 123.0),
        Comparison::new("more_minority_admitted", &col(|r| r.more_minority_admitted() as f64), 2128.0, 1898.0, 2349.0),
        Comparison::new("more_minority_graduating", &col(|r| r.more_minority_graduating() as f64), 432.0, 372.0, 483.0),
        Comparison::new("w", &col(|r| r.w), W_PAPER, W_PAPER - W_BAND, W_PAPER + W_BAND),
    ])
}

/// Runs the pipeline behind `table` and compares it with the published
/// numbers. `T3` is a single realization and ignores `replications`.
pub fn reproduce_table(table: TableId, config: &ReproduceConfig) -> Result<TableReport> {
    let rows = match table {
        TableId::T1 | TableId::T2 => medical_table(table, config)?,
        TableId::T3 => in_pool(config.jobs, || table3(config))??,
        TableId::F3Aggregates => f3(config)?,
    };
    let replications = if table == TableId::T3 { 1 } else { config.replications };
    let pass = rows.iter().all(|r| r.pass);
    Ok(TableReport { table, replications, seed: config.seed, rows, pass })
}

impl TableReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["table", "quantity", "mean", "q05", "q95", "paper", "low", "high", "pass"])?;
        for r in &self.rows {
            w.write_record([
                self.table.as_str().to_string(),
                r.quantity.clone(),
                r.mean.to_string(),
                r.q05.to_string(),
                r.q95.to_string(),
                r.paper.to_string(),
                r.low.to_string(),
                r.high.to_string(),
                r.pass.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fixed-width text table.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} ({} replication{}, seed {}): {}\n",
            self.table,
            self.replications,
            if self.replications == 1 { "" } else { "s" },
            self.seed,
            if self.pass { "PASS" } else { "FAIL" }
        );
        s.push_str(&format!(
            "{:<28} {:>12} {:>12} {:>12} {:>10} {:>22}  {}\n",
            "quantity", "mean", "q05", "q95", "paper", "target", "ok"
        ));
        for r in &self.rows {
            s.push_str(&format!(
                "{:<28} {:>12.4} {:>12.4} {:>12.4} {:>10.4} {:>22}  {}\n",
                r.quantity,
                r.mean,
                r.q05,
                r.q95,
                r.paper,
                format!("({:.4}, {:.4})", r.low, r.high),
                if r.pass { "yes" } else { "no" }
            ));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: bool,
    pub tables: Vec<TableReport>,
}

/// Writes `<table>.csv` per report and `summary.json` into `dir`.
pub fn write_outputs(reports: &[TableReport], dir: &Path) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    for r in reports {
        let file = std::fs::File::create(dir.join(format!("{}.csv", r.table)))?;
        r.write_csv(std::io::BufWriter::new(file))?;
    }
    let summary = Summary { pass: reports.iter().all(|r| r.pass), tables: reports.to_vec() };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(dir.join("summary.json"), text)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_ids_parse() {
        for t in TableId::ALL {
            assert_eq!(t.as_str().parse::<TableId>().unwrap(), t);
        }
        assert!("T9".parse::<TableId>().is_err());
        assert_eq!(serde_json::to_string(&TableId::F3Aggregates).unwrap(), "\"F3_aggregates\"");
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let mut c = ReproduceConfig::new(4, 11);
        let ws = |c: &ReproduceConfig| medical_weights([1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2000, 1e-3, c).unwrap();
        c.jobs = Some(1);
        let a = ws(&c);
        c.jobs = Some(3);
        assert_eq!(a, ws(&c));
        c.jobs = Some(0);
        assert!(medical_weights([1.0; 6], 2000, 1e-3, &c).is_err());
    }

    #[test]
    fn small_medical_table_is_close() {
        let r = reproduce_table(TableId::T1, &ReproduceConfig::new(8, 3)).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!((r.rows[1].mean - 5.0).abs() < 0.1, "{:?}", r.rows);
        assert!(r.to_text().contains("w3"));
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 4);
    }
}
