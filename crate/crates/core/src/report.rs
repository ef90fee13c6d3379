//! Running a resolved experiment and writing its CSV files.
//!
//! The results CSV starts with a block of `#` lines (tool version, config
//! hash, resolved plan per binning cell) followed by a header row and:
//!
//! * one row per `(cell, replication)`;
//! * one aggregated row per cell with `replication = -1` (regret mean and
//!   standard error, mean inferior count, clean-event violation rates);
//! * derived rows with `replication = -2`: static/dynamic regret ratios and
//!   per-group slope fits of `log regret` on `log T`.
//!
//! Floats use Rust's shortest round-trip formatting and lines end in `\n`.

use std::fmt::Write as _;

use crate::config::Experiment;
use crate::engine::{
    log_checkpoints, mean_and_se, replication_seed, run_episode, slope_fit, CleanEventParams, EpisodeOptions, Execution,
};
use crate::instance::Arm;
use crate::plan::rate_exponent;
use crate::sweep::{run_cell, Cell, CellError, CellOutput, PolicySpec};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub const COLUMNS: [&str; 14] = [
    "cell_id",
    "policy",
    "instance",
    "T",
    "M",
    "g_or_splits",
    "replication",
    "seed",
    "regret",
    "inferior_count",
    "clean_E_violation",
    "clean_AC_violation",
    "regret_se",
    "note",
];

/// A value computed across cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedRow {
    pub cell_id: String,
    pub policy: String,
    pub instance: String,
    pub horizon: Option<u64>,
    pub batches: Option<usize>,
    pub label: String,
    pub value: f64,
    pub std_err: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub cells: Vec<CellOutput>,
    pub derived: Vec<DerivedRow>,
}

impl RunOutput {
    pub fn cell(&self, id: &str) -> Option<&CellOutput> {
        self.cells.iter().find(|c| c.cell.id == id)
    }
}

/// Runs every cell of `experiment` in order.
pub fn run_experiment(experiment: &Experiment, execution: Execution) -> Result<RunOutput, CellError> {
    let cfg = &experiment.config;
    let cells = experiment
        .cells
        .iter()
        .map(|cell| {
            let checkpoints = log_checkpoints(cell.horizon, cfg.checkpoints);
            run_cell(cell, cfg.replications, cfg.master_seed, &checkpoints, false, execution)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let derived = derived_rows(&cells);
    Ok(RunOutput { cells, derived })
}

/// Value of the `M` column: plan batches, `T` for the fully online BSE, 1 otherwise.
pub fn batches_column(cell: &Cell) -> u64 {
    match &cell.policy {
        PolicySpec::OnlineBse { .. } => cell.horizon,
        other => other.batches() as u64,
    }
}

/// Static/dynamic ratios and per-group slope fits.
pub fn derived_rows(cells: &[CellOutput]) -> Vec<DerivedRow> {
    let mut rows = Vec::new();
    for s in cells.iter().filter(|c| c.cell.policy.name() == "static_se") {
        let m = s.cell.policy.batches();
        let dynamic = cells.iter().find(|d| {
            d.cell.policy.name() == "basedb"
                && d.cell.horizon == s.cell.horizon
                && d.cell.policy.batches() == m
                && d.cell.instance == s.cell.instance
        });
        let Some(d) = dynamic else { continue };
        let (ms, md) = (s.stats.mean_regret, d.stats.mean_regret);
        if md <= 0.0 {
            continue;
        }
        let ratio = ms / md;
        let rel_s = if ms > 0.0 { s.stats.std_err / ms } else { 0.0 };
        let se = ratio * (rel_s.powi(2) + (d.stats.std_err / md).powi(2)).sqrt();
        rows.push(DerivedRow {
            cell_id: s.cell.id.clone(),
            policy: "static_se/basedb".into(),
            instance: s.cell.instance.name().into(),
            horizon: Some(s.cell.horizon),
            batches: Some(m),
            label: s.cell.policy.label(),
            value: ratio,
            std_err: Some(se),
            note: format!("ratio {} / {}", s.cell.id, d.cell.id),
        });
    }
    let mut groups: Vec<&str> = Vec::new();
    for c in cells {
        if !groups.contains(&c.cell.group.as_str()) {
            groups.push(&c.cell.group);
        }
    }
    for group in groups {
        let members: Vec<&CellOutput> = cells.iter().filter(|c| c.cell.group == group).collect();
        let mut horizons: Vec<u64> = members.iter().map(|c| c.cell.horizon).collect();
        horizons.sort_unstable();
        horizons.dedup();
        if horizons.len() < 3 || horizons.len() != members.len() {
            continue;
        }
        let points: Vec<(f64, f64)> = members
            .iter()
            .map(|c| (c.cell.horizon as f64, c.stats.mean_regret))
            .collect();
        let Ok(fit) = slope_fit(&points) else { continue };
        let first = members[0];
        let mut note = format!(
            "slope_fit intercept={} r2={} points={}",
            fit.intercept,
            fit.r2,
            points.len()
        );
        if let Some(plan) = first.cell.policy.effective_plan() {
            let p = plan.params;
            let _ = write!(note, " rate={}", rate_exponent(p.alpha, p.beta, p.dim, p.batches));
        }
        rows.push(DerivedRow {
            cell_id: group.to_string(),
            policy: first.cell.policy.name().into(),
            instance: first.cell.instance.name().into(),
            horizon: None,
            batches: first.cell.policy.effective_plan().map(|p| p.batches()),
            label: String::new(),
            value: fit.slope,
            std_err: None,
            note,
        });
    }
    rows
}

/// Shortest round-trip decimal form.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

fn header_block(experiment: &Experiment) -> String {
    let cfg = &experiment.config;
    let mut out = String::new();
    let _ = writeln!(out, "# tool={TOOL_VERSION}");
    let _ = writeln!(out, "# config_hash={}", experiment.hash);
    let _ = writeln!(out, "# name={}", cfg.name);
    let _ = writeln!(
        out,
        "# master_seed={} replications={} checkpoints={}",
        cfg.master_seed, cfg.replications, cfg.checkpoints
    );
    for cell in &experiment.cells {
        let Some(plan) = cell.policy.effective_plan() else {
            continue;
        };
        let p = plan.params;
        let _ = writeln!(
            out,
            "# plan cell={} T={} M={} alpha={} beta={} d={} L={} c_batch={} c_thresh={} gamma={} b={}",
            cell.id,
            p.horizon,
            p.batches,
            fmt_f64(p.alpha),
            fmt_f64(p.beta),
            p.dim,
            fmt_f64(p.lipschitz),
            fmt_f64(p.c_batch),
            fmt_f64(p.c_thresh),
            fmt_f64(plan.gamma),
            fmt_f64(plan.b)
        );
        for row in plan.table() {
            let _ = writeln!(
                out,
                "# plan cell={} i={} t={} dt={} g={} w={}",
                cell.id,
                row.i,
                row.t,
                row.dt,
                row.g.map(|g| g.to_string()).unwrap_or_default(),
                row.w.map(fmt_f64).unwrap_or_default()
            );
        }
    }
    out
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(buf)
}

fn bit(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

/// The results CSV for `output`.
pub fn render_csv(experiment: &Experiment, output: &RunOutput) -> String {
    let mut buf = header_block(experiment).into_bytes();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(COLUMNS).expect("write to memory");
        for c in &output.cells {
            let cell = &c.cell;
            let base = [
                cell.id.clone(),
                cell.policy.name().to_string(),
                cell.instance.name().to_string(),
                cell.horizon.to_string(),
                batches_column(cell).to_string(),
                cell.policy.label(),
            ];
            for (rep, r) in c.results.iter().enumerate() {
                let mut rec = base.to_vec();
                rec.extend([
                    rep.to_string(),
                    r.seed.to_string(),
                    fmt_f64(r.regret),
                    r.inferior_count.to_string(),
                    bit(r.e_violation),
                    bit(r.ac_violation),
                    String::new(),
                    String::new(),
                ]);
                w.write_record(&rec).expect("write to memory");
            }
            let s = &c.stats;
            let mut rec = base.to_vec();
            rec.extend([
                "-1".to_string(),
                String::new(),
                fmt_f64(s.mean_regret),
                fmt_f64(s.mean_inferior),
                fmt_f64(s.e_rate),
                fmt_f64(s.ac_rate),
                fmt_f64(s.std_err),
                format!(
                    "reps={} wrong_elimination_rate={}",
                    s.reps,
                    fmt_f64(s.wrong_elimination_rate)
                ),
            ]);
            w.write_record(&rec).expect("write to memory");
        }
        for d in &output.derived {
            w.write_record([
                d.cell_id.clone(),
                d.policy.clone(),
                d.instance.clone(),
                d.horizon.map(|t| t.to_string()).unwrap_or_default(),
                d.batches.map(|m| m.to_string()).unwrap_or_default(),
                d.label.clone(),
                "-2".to_string(),
                String::new(),
                fmt_f64(d.value),
                String::new(),
                String::new(),
                String::new(),
                d.std_err.map(fmt_f64).unwrap_or_default(),
                d.note.clone(),
            ])
            .expect("write to memory");
        }
        w.flush().expect("write to memory");
    }
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// Mean regret curve per cell: `cell_id,t,mean_regret,regret_se`.
pub fn render_curves(output: &RunOutput) -> String {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(["cell_id", "t", "mean_regret", "regret_se"])
            .expect("write to memory");
        for c in &output.cells {
            let Some(first) = c.results.first() else { continue };
            for (k, &(t, _)) in first.regret_curve.iter().enumerate() {
                let values: Vec<f64> = c.results.iter().map(|r| r.regret_curve[k].1).collect();
                let (mean, se) = mean_and_se(&values);
                w.write_record([c.cell.id.clone(), t.to_string(), fmt_f64(mean), fmt_f64(se)])
                    .expect("write to memory");
            }
        }
        w.flush().expect("write to memory");
    }
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// Per-batch leaf dump of replication 0 of every binning cell.
pub fn render_tree_dump(experiment: &Experiment) -> Result<String, CellError> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record([
            "cell_id",
            "batch",
            "layer",
            "index",
            "width",
            "arms_before",
            "arms_after",
            "pulls_plus",
            "pulls_minus",
            "mean_plus",
            "mean_minus",
        ])
        .expect("write to memory");
        for cell in &experiment.cells {
            let Some(plan) = cell.policy.effective_plan() else {
                continue;
            };
            let seed = replication_seed(experiment.config.master_seed, &cell.id, 0);
            let instance = cell.instance.build(seed).map_err(|source| CellError::Instance {
                cell: cell.id.clone(),
                source,
            })?;
            let mut policy = cell.policy.build(&instance, cell.horizon);
            let options = EpisodeOptions {
                checkpoints: Vec::new(),
                monitor: Some(CleanEventParams::from_plan(&plan)),
                keep_summaries: true,
            };
            let result = run_episode(&instance, &mut policy, cell.horizon, seed, &options).map_err(|source| {
                CellError::Engine {
                    cell: cell.id.clone(),
                    source,
                }
            })?;
            for summary in &result.summaries {
                for leaf in &summary.leaves {
                    let index: Vec<String> = leaf.index.iter().map(|v| v.to_string()).collect();
                    let mean = |arm| leaf.mean(arm).map(fmt_f64).unwrap_or_default();
                    w.write_record([
                        cell.id.clone(),
                        summary.batch.to_string(),
                        leaf.layer.to_string(),
                        index.join(":"),
                        fmt_f64(leaf.width()),
                        leaf.arms_before.to_string(),
                        leaf.arms_after.to_string(),
                        leaf.pulls[0].to_string(),
                        leaf.pulls[1].to_string(),
                        mean(Arm::Plus),
                        mean(Arm::Minus),
                    ])
                    .expect("write to memory");
                }
            }
        }
        w.flush().expect("write to memory");
    }
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn minimal() -> Experiment {
        ExperimentConfig::from_toml(
            r#"
name = "minimal"
replications = 5
checkpoints = 4
[instance]
name = "experiment"
signs = [1, 1, 1, 1]
[plan]
T = 1000
alpha = 0.2
[policy]
name = "oracle"
"#,
        )
        .unwrap()
        .resolve()
        .unwrap()
    }

    #[test]
    fn oracle_rows_have_zero_regret() {
        let exp = minimal();
        let out = run_experiment(&exp, Execution::Serial).unwrap();
        let csv = render_csv(&exp, &out);
        assert!(!csv.contains('\r'));
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(csv.as_bytes());
        let headers = reader.headers().unwrap().clone();
        assert_eq!(headers.iter().collect::<Vec<_>>(), COLUMNS.to_vec());
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        let reps: Vec<_> = rows.iter().filter(|r| &r[6] != "-1" && &r[6] != "-2").collect();
        assert_eq!(reps.len(), 5);
        assert!(reps.iter().all(|r| &r[8] == "0"));
        let agg: Vec<_> = rows.iter().filter(|r| &r[6] == "-1").collect();
        assert_eq!(agg.len(), 1);
        assert_eq!(&agg[0][12], "0");
    }

    #[test]
    fn header_carries_hash_and_version() {
        let exp = minimal();
        let out = run_experiment(&exp, Execution::Serial).unwrap();
        let csv = render_csv(&exp, &out);
        assert!(csv.starts_with(&format!("# tool={TOOL_VERSION}\n# config_hash={}\n", exp.hash)));
    }

    #[test]
    fn curves_end_at_horizon() {
        let exp = minimal();
        let out = run_experiment(&exp, Execution::Serial).unwrap();
        let curves = render_curves(&out);
        let last = curves.lines().last().unwrap();
        assert!(last.starts_with("oracle-T1000,1000,0,"), "{last}");
    }

    #[test]
    fn float_format_is_shortest_round_trip() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(125.0), "125");
        assert_eq!(fmt_f64(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }
}
