//! Plot-ready tables over an evaluation grid.
//!
//! Rounds are grouped into the difficulty experiment (mid placement) and the
//! placement experiment (medium difficulty). Evaluation logs carry their
//! experiment explicitly; bare episode logs are assigned by setting, so a
//! medium/mid round from such a log counts towards both.

use std::collections::BTreeMap;

use serde::Serialize;

use super::metrics::{hit_rate, RoundMetrics};
use super::stats::{ks_normality_test, wilcoxon_signed_rank, Alternative, KsResult, WilcoxonResult};
use super::ToolsError;
use crate::trainer::eval::Experiment;
use crate::whacapp::{Difficulty, Placement};

/// One output file of the bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportBundle {
    pub files: Vec<ReportFile>,
    pub warnings: Vec<String>,
}

impl ReportBundle {
    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|f| f.name == name).map(|f| f.contents.as_str())
    }

    pub fn write_to(&self, dir: &std::path::Path) -> Result<(), ToolsError> {
        std::fs::create_dir_all(dir)?;
        for f in &self.files {
            std::fs::write(dir.join(&f.name), &f.contents)?;
        }
        Ok(())
    }
}

fn in_experiment(m: &RoundMetrics, e: Experiment) -> bool {
    match m.setting {
        Some(s) => s.experiment == e,
        None => match e {
            Experiment::Difficulty => m.placement == Placement::Mid,
            Experiment::Placement => m.difficulty == Difficulty::Medium,
        },
    }
}

fn experiment_name(e: Experiment) -> &'static str {
    match e {
        Experiment::Difficulty => "difficulty",
        Experiment::Placement => "placement",
    }
}

/// `(experiment, difficulty, placement)` groups in grid order, each with
/// its rounds sorted by round index then episode.
fn groups(rounds: &[RoundMetrics]) -> Vec<(Experiment, Difficulty, Placement, Vec<&RoundMetrics>)> {
    let mut grid = Vec::new();
    for d in Difficulty::ALL {
        grid.push((Experiment::Difficulty, d, Placement::Mid));
    }
    for p in Placement::ALL {
        grid.push((Experiment::Placement, Difficulty::Medium, p));
    }
    grid.into_iter()
        .map(|(e, d, p)| {
            let mut rs: Vec<&RoundMetrics> = rounds
                .iter()
                .filter(|m| in_experiment(m, e) && m.difficulty == d && m.placement == p)
                .collect();
            rs.sort_by_key(|m| (m.round.unwrap_or(usize::MAX), m.episode));
            (e, d, p, rs)
        })
        .collect()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn sd(xs: &[f64]) -> Option<f64> {
    let m = mean(xs.iter().copied())?;
    (xs.len() > 1).then(|| (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt())
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

fn csv_of<T: Serialize>(rows: &[T], header: &[&str]) -> Result<String, ToolsError> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    super::finish_csv(w)
}

#[derive(Serialize)]
struct CountsRow {
    level: String,
    rounds: usize,
    mean_hits: Option<f64>,
    sd_hits: Option<f64>,
    mean_misses: Option<f64>,
    sd_misses: Option<f64>,
    mean_slow_contacts: Option<f64>,
    mean_hit_rate: Option<f64>,
    pooled_hit_rate: Option<f64>,
}

const COUNTS_HEADER: [&str; 9] = [
    "level",
    "rounds",
    "mean_hits",
    "sd_hits",
    "mean_misses",
    "sd_misses",
    "mean_slow_contacts",
    "mean_hit_rate",
    "pooled_hit_rate",
];

fn counts_row(level: String, rs: &[&RoundMetrics]) -> CountsRow {
    let hits: Vec<f64> = rs.iter().map(|m| m.hits as f64).collect();
    let misses: Vec<f64> = rs.iter().map(|m| m.misses as f64).collect();
    CountsRow {
        level,
        rounds: rs.len(),
        mean_hits: mean(hits.iter().copied()),
        sd_hits: sd(&hits),
        mean_misses: mean(misses.iter().copied()),
        sd_misses: sd(&misses),
        mean_slow_contacts: mean(rs.iter().map(|m| m.slow_contacts as f64)),
        mean_hit_rate: mean(rs.iter().filter_map(|m| m.hit_rate)),
        pooled_hit_rate: hit_rate(rs.iter().map(|m| m.hits).sum(), rs.iter().map(|m| m.misses).sum()),
    }
}

#[derive(Serialize)]
struct RoundRow {
    experiment: &'static str,
    difficulty: Difficulty,
    placement: Placement,
    round: usize,
    episode: u64,
    hits: u64,
    misses: u64,
    slow_contacts: u64,
    hit_rate: Option<f64>,
    max_fatigued: f64,
    mean_hammer_depth: Option<f64>,
}

#[derive(Serialize)]
struct SampleRow {
    experiment: &'static str,
    difficulty: Difficulty,
    placement: Placement,
    round: usize,
    index: usize,
    value: f64,
}

#[derive(Serialize)]
struct DistRow {
    experiment: &'static str,
    difficulty: Difficulty,
    placement: Placement,
    count: usize,
    mean: Option<f64>,
    sd: Option<f64>,
    p05: Option<f64>,
    p25: Option<f64>,
    median: Option<f64>,
    p75: Option<f64>,
    p95: Option<f64>,
}

const DIST_HEADER: [&str; 11] =
    ["experiment", "difficulty", "placement", "count", "mean", "sd", "p05", "p25", "median", "p75", "p95"];

fn dist_row(e: Experiment, d: Difficulty, p: Placement, mut xs: Vec<f64>) -> DistRow {
    xs.sort_by(f64::total_cmp);
    DistRow {
        experiment: experiment_name(e),
        difficulty: d,
        placement: p,
        count: xs.len(),
        mean: mean(xs.iter().copied()),
        sd: sd(&xs),
        p05: quantile(&xs, 0.05),
        p25: quantile(&xs, 0.25),
        median: quantile(&xs, 0.5),
        p75: quantile(&xs, 0.75),
        p95: quantile(&xs, 0.95),
    }
}

#[derive(Serialize)]
struct Heatmap {
    experiment: &'static str,
    difficulty: Difficulty,
    placement: Placement,
    rounds: usize,
    /// Row-major, top row first; pooled hits / spawns over all rounds.
    hit_rate: [[Option<f64>; 3]; 3],
    hits: [[u64; 3]; 3],
    spawns: [[u64; 3]; 3],
}

#[derive(Serialize)]
struct FatigueRow {
    placement: Placement,
    round: usize,
    episode: u64,
    max_fatigued: f64,
}

#[derive(Serialize)]
struct Comparison {
    /// `x<y`: tests whether `x` rounds fatigue less than `y` rounds.
    comparison: String,
    /// Rounds paired by position after sorting by round index.
    pairs: usize,
    result: WilcoxonResult,
}

#[derive(Serialize)]
struct FatigueTests {
    normality: BTreeMap<String, KsResult>,
    wilcoxon: Vec<Comparison>,
}

#[derive(Serialize)]
struct Summary {
    rounds: usize,
    settings: Vec<SettingSummary>,
    warnings: Vec<String>,
    files: Vec<String>,
}

#[derive(Serialize)]
struct SettingSummary {
    experiment: &'static str,
    difficulty: Difficulty,
    placement: Placement,
    rounds: usize,
}

/// Build every table of the report. Missing settings produce warnings and
/// empty tables rather than errors.
pub fn report(rounds: &[RoundMetrics]) -> Result<ReportBundle, ToolsError> {
    let mut bundle = ReportBundle::default();
    let groups = groups(rounds);
    for (e, d, p, rs) in &groups {
        if rs.is_empty() {
            bundle.warnings.push(format!(
                "no rounds for {} experiment setting difficulty={d} placement={p}",
                experiment_name(*e)
            ));
        }
    }
    let in_exp = |e: Experiment| groups.iter().filter(move |g| g.0 == e);
    let mut add = |name: &str, contents: String| {
        bundle.files.push(ReportFile {
            name: name.to_string(),
            contents,
        })
    };

    let by_difficulty: Vec<CountsRow> =
        in_exp(Experiment::Difficulty).map(|(_, d, _, rs)| counts_row(d.to_string(), rs)).collect();
    add("hits_misses_by_difficulty.csv", csv_of(&by_difficulty, &COUNTS_HEADER)?);
    let by_placement: Vec<CountsRow> =
        in_exp(Experiment::Placement).map(|(_, _, p, rs)| counts_row(p.to_string(), rs)).collect();
    add("hits_misses_by_placement.csv", csv_of(&by_placement, &COUNTS_HEADER)?);

    let mut per_round = Vec::new();
    let mut speeds = Vec::new();
    let mut depths = Vec::new();
    let mut speed_dist = Vec::new();
    let mut depth_dist = Vec::new();
    let mut heatmaps = Vec::new();
    for (e, d, p, rs) in &groups {
        let en = experiment_name(*e);
        for (k, m) in rs.iter().enumerate() {
            let round = m.round.unwrap_or(k);
            per_round.push(RoundRow {
                experiment: en,
                difficulty: *d,
                placement: *p,
                round,
                episode: m.episode,
                hits: m.hits,
                misses: m.misses,
                slow_contacts: m.slow_contacts,
                hit_rate: m.hit_rate,
                max_fatigued: m.max_fatigued,
                mean_hammer_depth: mean(m.hammer_depths.iter().copied()),
            });
            let sample = |(index, v): (usize, &f64)| SampleRow {
                experiment: en,
                difficulty: *d,
                placement: *p,
                round,
                index,
                value: *v,
            };
            speeds.extend(m.hitting_speeds.iter().enumerate().map(sample));
            depths.extend(m.hammer_depths.iter().enumerate().map(sample));
        }
        speed_dist.push(dist_row(*e, *d, *p, rs.iter().flat_map(|m| m.hitting_speeds.iter().copied()).collect()));
        depth_dist.push(dist_row(*e, *d, *p, rs.iter().flat_map(|m| m.hammer_depths.iter().copied()).collect()));
        let mut hits = [[0; 3]; 3];
        let mut spawns = [[0; 3]; 3];
        for m in rs {
            for r in 0..3 {
                for c in 0..3 {
                    hits[r][c] += m.per_cell_hits[r][c];
                    spawns[r][c] += m.per_cell_spawns[r][c];
                }
            }
        }
        let hit_rate = std::array::from_fn(|r| {
            std::array::from_fn(|c| (spawns[r][c] > 0).then(|| hits[r][c] as f64 / spawns[r][c] as f64))
        });
        heatmaps.push(Heatmap {
            experiment: en,
            difficulty: *d,
            placement: *p,
            rounds: rs.len(),
            hit_rate,
            hits,
            spawns,
        });
    }
    let round_header = [
        "experiment",
        "difficulty",
        "placement",
        "round",
        "episode",
        "hits",
        "misses",
        "slow_contacts",
        "hit_rate",
        "max_fatigued",
        "mean_hammer_depth",
    ];
    let sample_header = ["experiment", "difficulty", "placement", "round", "index", "value"];
    add("rounds.csv", csv_of(&per_round, &round_header)?);
    add("hitting_speeds.csv", csv_of(&speeds, &sample_header)?);
    add("hitting_speed_summary.csv", csv_of(&speed_dist, &DIST_HEADER)?);
    add("hammer_depths.csv", csv_of(&depths, &sample_header)?);
    add("hammer_depth_summary.csv", csv_of(&depth_dist, &DIST_HEADER)?);
    add("heatmaps.json", serde_json::to_string_pretty(&heatmaps)?);

    // Fatigue by placement with the paired one-sided comparisons.
    let by_p: Vec<(Placement, Vec<&RoundMetrics>)> =
        in_exp(Experiment::Placement).map(|(_, _, p, rs)| (*p, rs.clone())).collect();
    let fatigue_rows: Vec<FatigueRow> = by_p
        .iter()
        .flat_map(|(p, rs)| {
            rs.iter().enumerate().map(|(k, m)| FatigueRow {
                placement: *p,
                round: m.round.unwrap_or(k),
                episode: m.episode,
                max_fatigued: m.max_fatigued,
            })
        })
        .collect();
    add(
        "fatigue_by_placement.csv",
        csv_of(&fatigue_rows, &["placement", "round", "episode", "max_fatigued"])?,
    );
    let sample = |p: Placement| -> Vec<f64> {
        by_p.iter().find(|(q, _)| *q == p).map(|(_, rs)| rs.iter().map(|m| m.max_fatigued).collect()).unwrap_or_default()
    };
    let mut warnings = Vec::new();
    let mut normality = BTreeMap::new();
    for p in Placement::ALL {
        let xs = sample(p);
        if xs.len() >= 3 {
            normality.insert(p.to_string(), ks_normality_test(&xs)?);
        } else {
            warnings.push(format!("normality test for placement={p} skipped: {} rounds", xs.len()));
        }
    }
    let mut wilcoxon = Vec::new();
    for (a, b) in [
        (Placement::Low, Placement::Mid),
        (Placement::Mid, Placement::High),
        (Placement::Low, Placement::High),
    ] {
        let (x, y) = (sample(a), sample(b));
        let n = x.len().min(y.len());
        if n == 0 {
            warnings.push(format!("comparison {a}<{b} skipped: no paired rounds"));
            continue;
        }
        if x.len() != y.len() {
            warnings.push(format!("comparison {a}<{b}: unequal round counts, using the first {n}"));
        }
        wilcoxon.push(Comparison {
            comparison: format!("{a}<{b}"),
            pairs: n,
            result: wilcoxon_signed_rank(&x[..n], &y[..n], Alternative::Less)?,
        });
    }
    add("fatigue_tests.json", serde_json::to_string_pretty(&FatigueTests { normality, wilcoxon })?);
    bundle.warnings.extend(warnings);

    let summary = Summary {
        rounds: rounds.len(),
        settings: groups
            .iter()
            .map(|(e, d, p, rs)| SettingSummary {
                experiment: experiment_name(*e),
                difficulty: *d,
                placement: *p,
                rounds: rs.len(),
            })
            .collect(),
        warnings: bundle.warnings.clone(),
        files: bundle.files.iter().map(|f| f.name.clone()).chain(["summary.json".to_string()]).collect(),
    };
    let text = serde_json::to_string_pretty(&summary)?;
    bundle.files.push(ReportFile {
        name: "summary.json".into(),
        contents: text,
    });
    Ok(bundle)
}
