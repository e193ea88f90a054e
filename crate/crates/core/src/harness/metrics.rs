//! Suite-level metrics and their text and CSV renderings.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::EpisodeResult;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("episode {episode} of instance {instance} has {found} stages, expected {expected}")]
    MisalignedStages { instance: u32, episode: u64, found: usize, expected: usize },
}

/// Stage-wise score: for stage `i`, the fraction of episodes completing it
/// among those that completed stage `i - 1` (every episode attempts stage 1).
/// `None` where no episode attempted the stage.
pub fn stage_scores(results: &[EpisodeResult]) -> Result<Vec<Option<f64>>, MetricsError> {
    let Some(first) = results.first() else {
        return Ok(Vec::new());
    };
    let n = first.stage_completions.len();
    for r in results {
        if r.stage_completions.len() != n {
            return Err(MetricsError::MisalignedStages {
                instance: r.instance,
                episode: r.episode,
                found: r.stage_completions.len(),
                expected: n,
            });
        }
    }
    Ok((0..n)
        .map(|i| {
            let attempted = results.iter().filter(|r| i == 0 || r.stage_completions[i - 1]).count();
            let done = results.iter().filter(|r| r.stage_completions[i]).count();
            (attempted > 0).then(|| done as f64 / attempted as f64)
        })
        .collect())
}

/// Mean fraction of stages credited per episode. Episodes of stage-less
/// tasks count their success as the single stage.
pub fn process_reward(results: &[EpisodeResult]) -> f64 {
    mean(results.iter().map(|r| {
        let n = r.stage_completions.len();
        if n == 0 {
            f64::from(u8::from(r.success))
        } else {
            r.stage_completions.iter().filter(|&&c| c).count() as f64 / n as f64
        }
    }))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub episodes: usize,
    pub success_rate: f64,
    pub stage_scores: Vec<Option<f64>>,
    pub process_reward: f64,
    pub mean_steps: f64,
    pub mean_pushes: f64,
    pub mean_pops: f64,
    pub mean_backtracks: f64,
    pub mean_max_depth: f64,
    pub errors: usize,
}

impl MetricsReport {
    /// Aggregates results. The reduction sorts by episode identity first so
    /// completion order never matters.
    pub fn from_results(label: &str, results: &[EpisodeResult]) -> Result<Self, MetricsError> {
        let mut sorted: Vec<&EpisodeResult> = results.iter().collect();
        sorted.sort_by_key(|r| (r.instance, r.episode));
        let owned: Vec<EpisodeResult> = sorted
            .iter()
            .map(|r| EpisodeResult { events: Vec::new(), ..(*r).clone() })
            .collect();
        let f = |g: fn(&EpisodeResult) -> f64| mean(owned.iter().map(g));
        Ok(Self {
            label: label.to_string(),
            episodes: owned.len(),
            success_rate: f(|r| f64::from(u8::from(r.success))),
            stage_scores: stage_scores(&owned)?,
            process_reward: process_reward(&owned),
            mean_steps: f(|r| r.steps_used as f64),
            mean_pushes: f(|r| f64::from(r.pushes)),
            mean_pops: f(|r| f64::from(r.pops)),
            mean_backtracks: f(|r| f64::from(r.backtrack_count)),
            mean_max_depth: f(|r| r.stack_depth_max as f64),
            errors: owned.iter().filter(|r| r.error.is_some()).count(),
        })
    }
}

fn score(s: Option<f64>) -> String {
    s.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

fn stage_count(reports: &[MetricsReport]) -> usize {
    reports.iter().map(|r| r.stage_scores.len()).max().unwrap_or(0)
}

fn rows(reports: &[MetricsReport]) -> (Vec<String>, Vec<Vec<String>>) {
    let stages = stage_count(reports);
    let mut header: Vec<String> = ["variant", "episodes", "success", "process", "steps", "pushes", "pops", "backtracks", "depth", "errors"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=stages).map(|i| format!("stage{i}")));
    let body = reports
        .iter()
        .map(|r| {
            let mut row = vec![
                r.label.clone(),
                r.episodes.to_string(),
                format!("{:.4}", r.success_rate),
                format!("{:.4}", r.process_reward),
                format!("{:.2}", r.mean_steps),
                format!("{:.3}", r.mean_pushes),
                format!("{:.3}", r.mean_pops),
                format!("{:.3}", r.mean_backtracks),
                format!("{:.3}", r.mean_max_depth),
                r.errors.to_string(),
            ];
            row.extend((0..stages).map(|i| score(r.stage_scores.get(i).copied().flatten())));
            row
        })
        .collect();
    (header, body)
}

/// Aligned-column text table, one row per report.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let (header, body) = rows(reports);
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(&header);
    for r in &body {
        out.push_str(&line(r));
    }
    out
}

pub fn render_csv(reports: &[MetricsReport]) -> String {
    let (header, body) = rows(reports);
    let mut out = header.join(",") + "\n";
    for r in body {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmdp::StateId;

    fn result(episode: u64, stages: &[bool], success: bool) -> EpisodeResult {
        EpisodeResult {
            instance: 0,
            episode,
            success,
            steps_used: 10,
            final_state: StateId(0),
            stack_depth_max: 1,
            backtrack_count: 0,
            pushes: 0,
            pops: 0,
            checks: 0,
            stage_completions: stages.to_vec(),
            error: None,
            events: Vec::new(),
        }
    }

    #[test]
    fn stage_scores_condition_on_the_previous_stage() {
        let rs: Vec<_> = (0..10).map(|i| result(i, &[true, true, false, false], false)).collect();
        assert_eq!(stage_scores(&rs).unwrap(), vec![Some(1.0), Some(1.0), Some(0.0), None]);
        let mixed = vec![result(0, &[true, false], false), result(1, &[false, false], false), result(2, &[true, true], true)];
        assert_eq!(stage_scores(&mixed).unwrap(), vec![Some(2.0 / 3.0), Some(0.5)]);
        let bad = vec![result(0, &[true], false), result(1, &[true, true], true)];
        assert!(matches!(stage_scores(&bad), Err(MetricsError::MisalignedStages { .. })));
    }

    #[test]
    fn process_reward_is_mean_stage_fraction() {
        let rs: Vec<_> = (0..4).map(|i| result(i, &[true, true, false, false], false)).collect();
        assert_eq!(process_reward(&rs), 0.5);
    }

    #[test]
    fn report_is_order_independent() {
        let a = vec![result(0, &[true], true), result(1, &[false], false)];
        let b = vec![a[1].clone(), a[0].clone()];
        let ra = MetricsReport::from_results("x", &a).unwrap();
        assert_eq!(ra, MetricsReport::from_results("x", &b).unwrap());
        let table = render_table(std::slice::from_ref(&ra));
        assert!(table.starts_with("variant"));
        assert_eq!(render_csv(&[ra]).lines().count(), 2);
    }
}
