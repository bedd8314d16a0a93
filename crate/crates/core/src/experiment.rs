//! Randomized benchmark runs over a grid of `(d_x, p)` rows, with per-trial
//! records, aggregate statistics and table rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::binomial;
use crate::params::Method;
use crate::solver::{solve_problem, SolveStatus, SolverOptions};
use crate::sysgen::{TrialInstance, TrialSpec, DEFAULT_DT, DEFAULT_HORIZON, ENSEMBLE};
use crate::zonotope::Zonotope;

/// Grid rows of the benchmark, `(d_x, p)`.
pub const DEFAULT_GRID: [(usize, usize); 8] =
    [(3, 3), (3, 6), (3, 8), (6, 10), (8, 13), (10, 14), (12, 15), (15, 16)];

pub const TRIAL_CSV: &str = "trials.csv";
pub const AGGREGATE_JSON: &str = "aggregate.json";
pub const BOXPLOT_JSON: &str = "boxplot.json";
pub const TABLES_TXT: &str = "tables.txt";
pub const METADATA_JSON: &str = "metadata.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRow {
    #[serde(alias = "d_x")]
    pub dim: usize,
    #[serde(alias = "p")]
    pub generators: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
}

impl GridRow {
    pub fn new(dim: usize, generators: usize, trials: Option<usize>) -> Self {
        Self { dim, generators, trials }
    }

    /// 200 trials for `d_x ≤ 6`, 30 above, unless set explicitly.
    pub fn trial_count(&self) -> usize {
        self.trials.unwrap_or(if self.dim <= 6 { 200 } else { 30 })
    }
}

fn default_grid() -> Vec<GridRow> {
    DEFAULT_GRID.iter().map(|&(d, p)| GridRow::new(d, p, None)).collect()
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_jobs() -> usize {
    1
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_grid")]
    pub grid: Vec<GridRow>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Per-trial limit on the maximization, seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_secs: Option<f64>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<SolverOptions>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            methods: default_methods(),
            master_seed: 0,
            output_dir: None,
            time_limit_secs: None,
            jobs: 1,
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            options: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Invalid("methods: at least one method is required".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::Invalid("grid: at least one row is required".into()));
        }
        for (i, row) in self.grid.iter().enumerate() {
            if row.trial_count() == 0 {
                return Err(Error::Invalid(format!("grid[{i}].trials: must be at least 1")));
            }
            if row.dim == 0 || row.generators < row.dim {
                return Err(Error::Invalid(format!("grid[{i}]: need 1 ≤ d_x ≤ p")));
            }
        }
        if self.jobs == 0 {
            return Err(Error::Invalid("jobs: must be at least 1".into()));
        }
        self.solver_options().validate()
    }

    pub fn solver_options(&self) -> SolverOptions {
        let mut opts = self.options.clone().unwrap_or_default();
        if self.time_limit_secs.is_some() {
            opts.time_limit_secs = self.time_limit_secs;
        }
        opts
    }

    pub fn num_trials(&self) -> usize {
        self.grid.iter().map(|r| r.trial_count()).sum::<usize>() * self.methods.len()
    }
}

/// One solve of one method on one generated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub d_x: usize,
    pub p: usize,
    pub method: Method,
    pub trial: usize,
    pub seed: u64,
    pub status: SolveStatus,
    pub volume: Option<f64>,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub zonotope: Option<Zonotope>,
}

fn run_one(instance: &TrialInstance, method: Method, opts: &SolverOptions) -> TrialOutcome {
    let spec = &instance.spec;
    let mut record = TrialRecord {
        d_x: spec.dim,
        p: spec.generators,
        method,
        trial: spec.trial,
        seed: instance.seed,
        status: SolveStatus::NumericalFailure,
        volume: None,
        objective: None,
        iterations: 0,
        wall_time_s: 0.0,
        certified: false,
    };
    let solved = instance.problem(method).and_then(|p| solve_problem(&p, opts));
    let Ok(r) = solved else {
        return TrialOutcome { record, zonotope: None };
    };
    record.status = r.status;
    record.iterations = r.iterations;
    record.wall_time_s = r.wall_time.as_secs_f64();
    record.certified = r.certified;
    record.objective = r.objective_value.is_finite().then_some(r.objective_value);
    if r.status == SolveStatus::Optimal {
        record.volume = Some(r.volume);
    }
    TrialOutcome {
        record,
        zonotope: r.zonotope,
    }
}

/// Runs every grid row × trial × method; results are ordered by row, trial and method.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    let opts = config.solver_options();
    let mut specs = Vec::new();
    for row in &config.grid {
        for trial in 0..row.trial_count() {
            let mut spec = TrialSpec::new(row.dim, row.generators, trial, config.master_seed)?;
            spec.dt = config.dt;
            spec.horizon = config.horizon;
            specs.push(spec);
        }
    }

    let next = AtomicUsize::new(0);
    let sink: Mutex<Vec<(usize, Vec<TrialOutcome>)>> = Mutex::new(Vec::with_capacity(specs.len()));
    let gen_error: Mutex<Option<Error>> = Mutex::new(None);
    let workers = config.jobs.min(specs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(spec) = specs.get(k) else { break };
                let instance = match TrialInstance::generate(spec) {
                    Ok(i) => i,
                    Err(e) => {
                        *gen_error.lock().expect("lock") = Some(e);
                        break;
                    }
                };
                let outcomes = config.methods.iter().map(|&m| run_one(&instance, m, &opts)).collect();
                sink.lock().expect("lock").push((k, outcomes));
            });
        }
    });
    if let Some(e) = gen_error.into_inner().expect("lock") {
        return Err(e);
    }
    let mut results = sink.into_inner().expect("lock");
    results.sort_by_key(|(k, _)| *k);
    Ok(results.into_iter().flat_map(|(_, o)| o).collect())
}

pub fn write_trial_csv<W: io::Write>(records: &[TrialRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    Ok(())
}

pub fn read_trial_csv<R: io::Read>(input: R) -> Result<Vec<TrialRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Invalid(format!("csv: {e}"))))
        .collect()
}

/// Quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        Some(Self {
            count: s.len(),
            mean: s.iter().sum::<f64>() / s.len() as f64,
            median: quantile(&s, 0.5),
            q1: quantile(&s, 0.25),
            q3: quantile(&s, 0.75),
            min: s[0],
            max: s[s.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub d_x: usize,
    pub p: usize,
    pub method: Method,
    pub trials: usize,
    pub optimal: usize,
    /// Over Optimal trials only.
    pub volume: Option<Summary>,
    /// Over all trials.
    pub runtime: Option<Summary>,
}

fn grouped(records: &[TrialRecord]) -> BTreeMap<(usize, usize, Method), Vec<&TrialRecord>> {
    let mut groups: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for r in records {
        groups.entry((r.d_x, r.p, r.method)).or_default().push(r);
    }
    groups
}

pub fn aggregate(records: &[TrialRecord]) -> Vec<AggregateRow> {
    grouped(records)
        .into_iter()
        .map(|((d_x, p, method), rs)| {
            let volumes: Vec<f64> = rs.iter().filter_map(|r| r.volume).collect();
            let runtimes: Vec<f64> = rs.iter().map(|r| r.wall_time_s).collect();
            AggregateRow {
                d_x,
                p,
                method,
                trials: rs.len(),
                optimal: rs.iter().filter(|r| r.status == SolveStatus::Optimal).count(),
                volume: Summary::of(&volumes),
                runtime: Summary::of(&runtimes),
            }
        })
        .collect()
}

/// Box-and-whisker statistics with whiskers at the most extreme data within 1.5 IQR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let s = Summary::of(values)?;
        let iqr = s.q3 - s.q1;
        let (lo_fence, hi_fence) = (s.q1 - 1.5 * iqr, s.q3 + 1.5 * iqr);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let inside: Vec<f64> = sorted.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence).collect();
        Some(Self {
            median: s.median,
            q1: s.q1,
            q3: s.q3,
            whisker_low: inside.first().copied().unwrap_or(s.q1),
            whisker_high: inside.last().copied().unwrap_or(s.q3),
            outliers: sorted.into_iter().filter(|v| *v < lo_fence || *v > hi_fence).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotRow {
    pub d_x: usize,
    pub p: usize,
    pub method: Method,
    pub volume: Option<BoxStats>,
    pub runtime: Option<BoxStats>,
}

pub fn boxplot_summary(records: &[TrialRecord]) -> Vec<BoxplotRow> {
    grouped(records)
        .into_iter()
        .map(|((d_x, p, method), rs)| {
            let volumes: Vec<f64> = rs.iter().filter_map(|r| r.volume).collect();
            let runtimes: Vec<f64> = rs.iter().map(|r| r.wall_time_s).collect();
            BoxplotRow {
                d_x,
                p,
                method,
                volume: BoxStats::of(&volumes),
                runtime: BoxStats::of(&runtimes),
            }
        })
        .collect()
}

fn render_table(
    out: &mut String,
    title: &str,
    rows: &[(usize, usize)],
    methods: &[Method],
    cell: impl Fn(usize, usize, Method) -> Option<f64>,
) {
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<10}{:>8}", "(d_x, p)", "C(p,d)");
    for m in methods {
        let _ = write!(out, "{:>12}", m.label());
    }
    out.push('\n');
    for &(d, p) in rows {
        let _ = write!(out, "{:<10}{:>8}", format!("({d}, {p})"), binomial(p, d));
        for &m in methods {
            match cell(d, p, m) {
                Some(v) => {
                    let _ = write!(out, "{:>12}", format_value(v));
                }
                None => {
                    let _ = write!(out, "{:>12}", "-");
                }
            }
        }
        out.push('\n');
    }
}

fn format_value(v: f64) -> String {
    if v.abs() >= 1e5 || (v != 0.0 && v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

/// Mean volume and mean runtime tables, one line per grid row and one column per method.
pub fn render_tables(aggregates: &[AggregateRow], methods: &[Method]) -> String {
    let mut rows: Vec<(usize, usize)> = aggregates.iter().map(|a| (a.d_x, a.p)).collect();
    rows.dedup();
    let find = |d, p, m| aggregates.iter().find(|a| a.d_x == d && a.p == p && a.method == m);
    let mut out = String::new();
    render_table(&mut out, "Average optimal volumes", &rows, methods, |d, p, m| {
        find(d, p, m).and_then(|a| a.volume.as_ref()).map(|s| s.mean)
    });
    out.push('\n');
    render_table(&mut out, "Average runtimes (seconds)", &rows, methods, |d, p, m| {
        find(d, p, m).and_then(|a| a.runtime.as_ref()).map(|s| s.mean)
    });
    out
}

#[derive(Debug, Clone, Serialize)]
struct Metadata<'a> {
    ensemble: &'a str,
    config: &'a ExperimentConfig,
    trials: usize,
}

/// Writes the trial CSV, aggregate and box-plot JSON, tables and run metadata.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, records: &[TrialRecord]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv_bytes = Vec::new();
    write_trial_csv(records, &mut csv_bytes).map_err(io::Error::other)?;
    fs::write(dir.join(TRIAL_CSV), csv_bytes)?;
    let agg = aggregate(records);
    fs::write(dir.join(AGGREGATE_JSON), serde_json::to_string_pretty(&agg)?)?;
    fs::write(dir.join(BOXPLOT_JSON), serde_json::to_string_pretty(&boxplot_summary(records))?)?;
    fs::write(dir.join(TABLES_TXT), render_tables(&agg, &config.methods))?;
    let meta = Metadata {
        ensemble: ENSEMBLE,
        config,
        trials: records.len(),
    };
    fs::write(dir.join(METADATA_JSON), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(trials: usize) -> ExperimentConfig {
        ExperimentConfig {
            grid: vec![GridRow::new(2, 3, Some(trials))],
            horizon: 10,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_trial_counts() {
        assert_eq!(GridRow::new(6, 10, None).trial_count(), 200);
        assert_eq!(GridRow::new(8, 13, None).trial_count(), 30);
        assert_eq!(GridRow::new(8, 13, Some(5)).trial_count(), 5);
        let c = ExperimentConfig::default();
        assert_eq!(c.grid.len(), 8);
        assert_eq!(c.num_trials(), 4 * (4 * 200 + 4 * 30));
    }

    #[test]
    fn config_validation() {
        let mut c = tiny(1);
        c.methods.clear();
        assert!(c.validate().is_err());
        let mut c = tiny(0);
        assert!(c.validate().is_err());
        c.grid[0].trials = Some(1);
        c.grid[0].generators = 1;
        assert!(c.validate().is_err());
        let parsed: ExperimentConfig =
            serde_json::from_str(r#"{"grid":[{"d_x":3,"p":6,"trials":2}],"methods":["SFG+ss","UTPD+lgv"]}"#).unwrap();
        assert_eq!(parsed.grid[0], GridRow::new(3, 6, Some(2)));
        assert_eq!(parsed.methods, vec![Method::SfgSs, Method::UtpdLgv]);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"methods":["SFG+xx"]}"#).is_err());
    }

    #[test]
    fn single_trial_yields_one_row_per_method() {
        let out = run_experiment(&tiny(1)).unwrap();
        assert_eq!(out.len(), 4);
        for (o, m) in out.iter().zip(Method::ALL) {
            assert_eq!(o.record.method, m);
            assert_eq!(o.record.status, SolveStatus::Optimal);
            assert!(o.record.certified && o.record.volume.is_some());
        }
    }

    #[test]
    fn parallel_runs_match_serial_runs() {
        let serial = run_experiment(&tiny(3)).unwrap();
        let parallel = run_experiment(&ExperimentConfig { jobs: 3, ..tiny(3) }).unwrap();
        let strip = |o: &[TrialOutcome]| -> Vec<_> {
            o.iter().map(|t| (t.record.trial, t.record.method, t.record.volume, t.record.iterations)).collect()
        };
        assert_eq!(strip(&serial), strip(&parallel));
    }

    #[test]
    fn csv_round_trip() {
        let records: Vec<TrialRecord> = run_experiment(&tiny(2)).unwrap().into_iter().map(|o| o.record).collect();
        let mut bytes = Vec::new();
        write_trial_csv(&records, &mut bytes).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("d_x,p,method,trial,seed,status,volume,objective,iterations,wall_time_s,certified\n"));
        let back = read_trial_csv(bytes.as_slice()).unwrap();
        assert_eq!(back, records);
        let mut again = Vec::new();
        write_trial_csv(&back, &mut again).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn volume_column_is_empty_without_optimum() {
        let r = TrialRecord {
            d_x: 2,
            p: 2,
            method: Method::SfgSs,
            trial: 0,
            seed: 1,
            status: SolveStatus::Infeasible,
            volume: None,
            objective: None,
            iterations: 0,
            wall_time_s: 0.0,
            certified: false,
        };
        let mut bytes = Vec::new();
        write_trial_csv(&[r], &mut bytes).unwrap();
        assert!(String::from_utf8(bytes).unwrap().ends_with("2,2,SFG+ss,0,1,Infeasible,,,0,0.0,false\n"));
    }

    #[test]
    fn quartiles_interpolate() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        assert_eq!(s.mean, 2.5);
        let b = BoxStats::of(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!((b.whisker_low, b.whisker_high), (1.0, 4.0));
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn outputs_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(2);
        let records: Vec<_> = run_experiment(&cfg).unwrap().into_iter().map(|o| o.record).collect();
        write_outputs(dir.path(), &cfg, &records).unwrap();
        for f in [TRIAL_CSV, AGGREGATE_JSON, BOXPLOT_JSON, TABLES_TXT, METADATA_JSON] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let agg: Vec<AggregateRow> =
            serde_json::from_str(&fs::read_to_string(dir.path().join(AGGREGATE_JSON)).unwrap()).unwrap();
        assert_eq!(agg.len(), 4);
        assert!(agg.iter().all(|a| a.trials == 2));
        let tables = fs::read_to_string(dir.path().join(TABLES_TXT)).unwrap();
        assert!(tables.contains("(2, 3)") && tables.contains("UTPD+lgv"));
    }
}
