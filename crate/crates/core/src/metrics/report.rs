use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{olr, shapley_dclr, topk_map, AuditFlag};
use crate::claims::{ExtractedClaim, TaskType};
use crate::error::{Error, Result};
use crate::leakage::{Basis, LeakageVerdict};
use crate::shapley::ShapleyEstimate;

pub const DEFAULT_TOP_K: [usize; 3] = [1, 3, 5];

/// Everything computed for one (agent, instance) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAudit {
    pub agent: String,
    pub task: String,
    pub task_type: TaskType,
    pub instance_id: String,
    #[serde(default)]
    pub cutoff_date: Option<NaiveDate>,
    #[serde(default)]
    pub rationale: String,
    #[serde(default)]
    pub prediction: Value,
    /// Raw task score: Brier, relative error or Spearman rho.
    #[serde(default)]
    pub performance: Option<f64>,
    pub claims: Vec<ExtractedClaim>,
    pub shapley_estimates: Vec<ShapleyEstimate>,
    pub verdicts: Vec<LeakageVerdict>,
    pub olr: f64,
    pub shapley_dclr: f64,
    pub topk_leakage: BTreeMap<usize, f64>,
    #[serde(default)]
    pub flags: Vec<AuditFlag>,
}

impl InstanceAudit {
    pub fn new(
        agent: impl Into<String>,
        task: impl Into<String>,
        task_type: TaskType,
        instance_id: impl Into<String>,
        claims: Vec<ExtractedClaim>,
        shapley_estimates: Vec<ShapleyEstimate>,
        verdicts: Vec<LeakageVerdict>,
    ) -> Result<Self> {
        let o = olr(&verdicts);
        let d = shapley_dclr(&shapley_estimates, &verdicts)?;
        let topk = topk_map(&shapley_estimates, &verdicts, &DEFAULT_TOP_K)?;
        let mut flags: Vec<AuditFlag> = [o.flag, d.flag].into_iter().flatten().collect();
        flags.sort();
        flags.dedup();
        Ok(InstanceAudit {
            agent: agent.into(),
            task: task.into(),
            task_type,
            instance_id: instance_id.into(),
            cutoff_date: None,
            rationale: String::new(),
            prediction: Value::Null,
            performance: None,
            claims,
            shapley_estimates,
            verdicts,
            olr: o.value,
            shapley_dclr: d.value,
            topk_leakage: topk,
            flags,
        })
    }

    pub fn unverifiable(&self) -> usize {
        self.verdicts.iter().filter(|v| v.basis == Basis::Unverifiable).count()
    }
}

/// Display transform that makes higher better: 1-BS, 1-RE, rho.
pub fn transform_performance(task_type: TaskType, raw: f64) -> f64 {
    match task_type {
        TaskType::Classification | TaskType::Regression => 1.0 - raw,
        TaskType::Ranking => raw,
    }
}

fn performance_metric(task_type: TaskType) -> &'static str {
    match task_type {
        TaskType::Classification => "brier",
        TaskType::Regression => "relative_error",
        TaskType::Ranking => "spearman",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRow {
    pub task: String,
    pub task_type: TaskType,
    pub agent: String,
    pub instances: usize,
    pub performance_metric: String,
    /// Mean raw score over instances that have one.
    pub performance: Option<f64>,
    pub transformed_performance: Option<f64>,
    pub mean_olr: f64,
    pub mean_dclr: f64,
    pub mean_topk: BTreeMap<usize, f64>,
    pub total_claims: usize,
    pub unverifiable_claims: usize,
    pub flagged_instances: usize,
    /// Leaked claims over all claims, pooled across instances.
    pub pooled_olr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub agent: String,
    pub task: String,
    pub performance: f64,
    pub dclr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub rows: Vec<AgentRow>,
    pub tradeoff: Vec<TradeoffPoint>,
    pub metadata: BTreeMap<String, Value>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Unweighted per-instance means for every (task, agent) pair.
///
/// Rows are sorted by task then agent, and each group is averaged in
/// instance-id order, so the result does not depend on the order of `audits`.
pub fn build_report(audits: &[InstanceAudit]) -> Result<DatasetReport> {
    if audits.is_empty() {
        return Err(Error::EmptyAuditSet);
    }
    let mut groups: Vec<((String, String), Vec<&InstanceAudit>)> = Vec::new();
    for a in audits {
        let key = (a.task.clone(), a.agent.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(a),
            None => groups.push((key, vec![a])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    for (_, g) in &mut groups {
        g.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    }
    let mut rows = Vec::new();
    let mut tradeoff = Vec::new();
    for ((task, agent), group) in groups {
        let task_type = group[0].task_type;
        let performance = mean(group.iter().filter_map(|a| a.performance));
        let transformed = performance.map(|p| transform_performance(task_type, p));
        let mean_dclr = mean(group.iter().map(|a| a.shapley_dclr)).unwrap_or(0.0);
        let mut mean_topk = BTreeMap::new();
        for k in DEFAULT_TOP_K {
            let m = mean(group.iter().filter_map(|a| a.topk_leakage.get(&k).copied()));
            if let Some(m) = m {
                mean_topk.insert(k, m);
            }
        }
        let total_claims: usize = group.iter().map(|a| a.verdicts.len()).sum();
        let leaked: usize = group.iter().map(|a| a.verdicts.iter().filter(|v| v.leaked).count()).sum();
        if let Some(p) = transformed {
            tradeoff.push(TradeoffPoint {
                agent: agent.clone(),
                task: task.clone(),
                performance: p,
                dclr: mean_dclr,
            });
        }
        rows.push(AgentRow {
            task,
            task_type,
            agent,
            instances: group.len(),
            performance_metric: performance_metric(task_type).into(),
            performance,
            transformed_performance: transformed,
            mean_olr: mean(group.iter().map(|a| a.olr)).unwrap_or(0.0),
            mean_dclr,
            mean_topk,
            total_claims,
            unverifiable_claims: group.iter().map(|a| a.unverifiable()).sum(),
            flagged_instances: group.iter().filter(|a| !a.flags.is_empty()).count(),
            pooled_olr: if total_claims == 0 { 0.0 } else { leaked as f64 / total_claims as f64 },
        });
    }
    let mut metadata = BTreeMap::new();
    metadata.insert(
        "weighting".into(),
        Value::from("unweighted mean over instances; pooled_olr weights by claim count"),
    );
    metadata.insert("performance_transform".into(), Value::from("1-brier, 1-relative_error, spearman"));
    metadata.insert("top_k".into(), serde_json::json!(DEFAULT_TOP_K));
    Ok(DatasetReport { rows, tradeoff, metadata })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

impl DatasetReport {
    /// Aligned plain-text tables, one block per task.
    pub fn to_text(&self) -> String {
        let headers = [
            "Agent", "N", "Perf", "Perf*", "OLR", "DCLR", "Top-1", "Top-3", "Top-5", "Claims", "Unverif",
        ];
        let mut out = String::new();
        let mut tasks: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !tasks.contains(&r.task.as_str()) {
                tasks.push(&r.task);
            }
        }
        for task in tasks {
            let rows: Vec<&AgentRow> = self.rows.iter().filter(|r| r.task == task).collect();
            let metric = &rows[0].performance_metric;
            let _ = writeln!(out, "== {task} ({metric}; Perf* = transformed) ==");
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.agent.clone(),
                        r.instances.to_string(),
                        fmt_opt(r.performance),
                        fmt_opt(r.transformed_performance),
                        format!("{:.3}", r.mean_olr),
                        format!("{:.3}", r.mean_dclr),
                        fmt_opt(r.mean_topk.get(&1).copied()),
                        fmt_opt(r.mean_topk.get(&3).copied()),
                        fmt_opt(r.mean_topk.get(&5).copied()),
                        r.total_claims.to_string(),
                        r.unverifiable_claims.to_string(),
                    ]
                })
                .collect();
            let widths: Vec<usize> = (0..headers.len())
                .map(|i| table.iter().map(|row| row[i].len()).chain([headers[i].len()]).max().unwrap())
                .collect();
            let line = |cells: Vec<&str>| {
                cells
                    .iter()
                    .enumerate()
                    .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let _ = writeln!(out, "{}", line(headers.to_vec()));
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            for row in &table {
                let _ = writeln!(out, "{}", line(row.iter().map(String::as_str).collect()));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent,task,performance,dclr\n");
        for p in &self.tradeoff {
            let _ = writeln!(out, "{},{},{},{}", p.agent, p.task, p.performance, p.dclr);
        }
        out
    }
}
