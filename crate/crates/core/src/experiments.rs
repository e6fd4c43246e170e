//! Experiment grids: the synthetic configuration × condition × model × seed
//! study, the digits pipelines, result persistence and summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    binary_predict, make_splits, ova_labels, ova_predict, prepare_split, synthetic_dataset,
    Dataset, DatasetMeta, Digits, PreparedSplit,
};
use crate::error::{invalid, Error, Result};
use crate::network::{NetworkConfig, NetworkParams};
use crate::rng::{splitmix64, Purpose, RngStream};
use crate::statevector::{ConditionKind, EvalCondition, NoiseMode};
use crate::stats::{cohens_d, mean_std, wilcoxon, Significance, WilcoxonResult};
use crate::training::{
    init_params, predict, train, transfer_params, ModelVariant, RunRecord, TrainConfig,
};

/// Canonical text form of a condition: `ideal`, `shots(N)` or `shots_noise(N,p)`.
pub fn condition_id(cond: &EvalCondition) -> String {
    match cond.kind {
        ConditionKind::Ideal => "ideal".to_string(),
        ConditionKind::Shots => format!("shots({})", cond.n_shots),
        ConditionKind::ShotsNoise => format!("shots_noise({},{})", cond.n_shots, cond.p_depol),
    }
}

pub fn parse_condition_id(id: &str, noise_mode: NoiseMode) -> Result<EvalCondition> {
    let bad = || invalid(format!("unrecognized condition `{id}`"));
    if id == "ideal" {
        return Ok(EvalCondition {
            noise_mode,
            ..EvalCondition::ideal()
        });
    }
    let (kind, args) = id
        .strip_suffix(')')
        .and_then(|s| s.split_once('('))
        .ok_or_else(bad)?;
    let args: Vec<&str> = args.split(',').collect();
    let cond = match (kind, args.as_slice()) {
        ("shots", [n]) => EvalCondition {
            noise_mode,
            ..EvalCondition::shots(n.parse().map_err(|_| bad())?)
        },
        ("shots_noise", [n, p]) => EvalCondition::shots_noise(
            n.parse().map_err(|_| bad())?,
            p.parse().map_err(|_| bad())?,
            noise_mode,
        ),
        _ => return Err(bad()),
    };
    cond.validate()?;
    Ok(cond)
}

/// Stream discriminator identifying a condition, so every model of one
/// (seed, config, condition) cell draws from the same measurement stream.
fn condition_key(cond: &EvalCondition) -> u64 {
    let kind = match cond.kind {
        ConditionKind::Ideal => 0,
        ConditionKind::Shots => 1,
        ConditionKind::ShotsNoise => 2,
    };
    let mode = match cond.noise_mode {
        NoiseMode::ExactChannel => 0,
        NoiseMode::EigenvalueScale => 1,
    };
    [cond.n_shots, cond.p_depol.to_bits(), mode]
        .iter()
        .fold(kind, |h, &w| splitmix64(h ^ w))
}

fn init_stream(seed: u64, model: ModelVariant, discriminators: &[u64]) -> RngStream {
    let purpose = match model {
        ModelVariant::RedI => Purpose::InitIndependent,
        _ => Purpose::Init,
    };
    RngStream::keyed(seed, purpose, discriminators)
}

/// The synthetic study.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    /// `(n, d)` pairs.
    pub configs: Vec<(usize, usize)>,
    pub conditions: Vec<EvalCondition>,
    pub models: Vec<ModelVariant>,
    pub seeds: Range<u64>,
    pub train: TrainConfig,
    pub data_seed: u64,
    pub n_points: usize,
    /// Worker threads; 1 runs everything on the calling thread.
    pub workers: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            configs: crate::network::REFERENCE_CONFIGS.to_vec(),
            conditions: vec![
                EvalCondition::ideal(),
                EvalCondition::shots(1000),
                EvalCondition::shots_noise(1000, 0.01, NoiseMode::ExactChannel),
            ],
            models: ModelVariant::ALL.to_vec(),
            seeds: 0..16,
            train: TrainConfig::default(),
            data_seed: 0,
            n_points: 30,
            workers: 1,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.configs.is_empty() || self.conditions.is_empty() || self.models.is_empty() {
            return Err(invalid(
                "grid needs at least one config, condition and model",
            ));
        }
        if self.seeds.is_empty() {
            return Err(invalid("grid seed range is empty"));
        }
        if self.models.contains(&ModelVariant::RedT)
            && !self.models.contains(&ModelVariant::Original)
        {
            return Err(invalid(
                "red_t needs original in the same grid as its transfer source",
            ));
        }
        for &(n, d) in &self.configs {
            if !(2..=4).contains(&n) || d == 0 {
                return Err(invalid(format!(
                    "synthetic grid config n={n} d={d} is not supported"
                )));
            }
        }
        for c in &self.conditions {
            c.validate()?;
        }
        let distinct: BTreeSet<String> = self.conditions.iter().map(condition_id).collect();
        if distinct.len() != self.conditions.len() {
            return Err(invalid("grid conditions must be distinct"));
        }
        self.train.validate()
    }
}

fn failed_record(
    n: usize,
    degree: usize,
    model: ModelVariant,
    cond: &EvalCondition,
    seed: u64,
    msg: String,
) -> RunRecord {
    RunRecord {
        n,
        degree,
        model,
        condition: *cond,
        seed,
        losses: Vec::new(),
        failure: Some(msg),
    }
}

/// Trains one model and converts the outcome to a record plus its final parameters.
#[allow(clippy::too_many_arguments)]
fn train_record(
    params0: &NetworkParams<f64>,
    data: &Dataset<f64>,
    n: usize,
    degree: usize,
    model: ModelVariant,
    cond: &EvalCondition,
    tcfg: &TrainConfig,
    seed: u64,
    shots: RngStream,
) -> (RunRecord, Option<NetworkParams<f64>>) {
    let cfg = NetworkConfig {
        n,
        degree,
        mode: model.mode(),
    };
    let mut rng = shots;
    match train(params0, data, &cfg, tcfg, cond, &mut rng) {
        Ok(out) => {
            let params = out.failure.is_none().then_some(out.params);
            (
                RunRecord {
                    n,
                    degree,
                    model,
                    condition: *cond,
                    seed,
                    losses: out.losses,
                    failure: out.failure,
                },
                params,
            )
        }
        Err(e) => (
            failed_record(n, degree, model, cond, seed, e.to_string()),
            None,
        ),
    }
}

/// Every record of one `(config, seed)` cell.
///
/// Red-T always starts from the Original trained under the ideal condition;
/// that source is trained here when the grid does not already contain it.
pub fn run_cell(
    data: &Dataset<f64>,
    n: usize,
    degree: usize,
    seed: u64,
    conditions: &[EvalCondition],
    models: &[ModelVariant],
    tcfg: &TrainConfig,
) -> Vec<RunRecord> {
    let disc = [n as u64, degree as u64];
    let init_original: NetworkParams<f64> = init_params(
        n,
        degree,
        &mut init_stream(seed, ModelVariant::Original, &disc),
    );
    let init_independent: NetworkParams<f64> =
        init_params(n, degree, &mut init_stream(seed, ModelVariant::RedI, &disc));
    let ideal = EvalCondition::ideal();
    let shots_for = |cond: &EvalCondition| {
        RngStream::keyed(
            seed,
            Purpose::Shots,
            &[n as u64, degree as u64, condition_key(cond)],
        )
    };

    let mut cached_ideal_original: Option<RunRecord> = None;
    let source: Option<std::result::Result<NetworkParams<f64>, String>> =
        models.contains(&ModelVariant::RedT).then(|| {
            let (rec, params) = train_record(
                &init_original,
                data,
                n,
                degree,
                ModelVariant::Original,
                &ideal,
                tcfg,
                seed,
                shots_for(&ideal),
            );
            let source = params.ok_or_else(|| {
                format!(
                    "transfer source failed: {}",
                    rec.failure.clone().unwrap_or_default()
                )
            });
            cached_ideal_original = Some(rec);
            source
        });

    let mut records = Vec::with_capacity(conditions.len() * models.len());
    for cond in conditions {
        for &model in models {
            let record = match model {
                ModelVariant::Original => {
                    match cached_ideal_original.as_ref().filter(|_| cond.is_ideal()) {
                        Some(rec) => rec.clone(),
                        None => {
                            train_record(
                                &init_original,
                                data,
                                n,
                                degree,
                                model,
                                cond,
                                tcfg,
                                seed,
                                shots_for(cond),
                            )
                            .0
                        }
                    }
                }
                ModelVariant::RedI => {
                    train_record(
                        &init_independent,
                        data,
                        n,
                        degree,
                        model,
                        cond,
                        tcfg,
                        seed,
                        shots_for(cond),
                    )
                    .0
                }
                ModelVariant::RedT => match source.as_ref().expect("source trained for red_t") {
                    Ok(src) => {
                        train_record(
                            &transfer_params(src),
                            data,
                            n,
                            degree,
                            model,
                            cond,
                            tcfg,
                            seed,
                            shots_for(cond),
                        )
                        .0
                    }
                    Err(msg) => failed_record(n, degree, model, cond, seed, msg.clone()),
                },
            };
            records.push(record);
        }
    }
    records
}

fn in_pool<R: Send>(workers: usize, job: impl FnOnce() -> R + Send) -> Result<R> {
    if workers <= 1 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

fn sort_records(records: &mut [RunRecord], conditions: &[EvalCondition]) {
    let cond_pos = |c: &EvalCondition| conditions.iter().position(|x| x == c).unwrap_or(usize::MAX);
    records.sort_by(|a, b| {
        (a.n, a.degree, cond_pos(&a.condition), a.model, a.seed).cmp(&(
            b.n,
            b.degree,
            cond_pos(&b.condition),
            b.model,
            b.seed,
        ))
    });
}

/// Runs the whole grid. Failed runs are kept as records with a failure
/// message; the grid continues.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let mut datasets = BTreeMap::new();
    for &(n, _) in &spec.configs {
        if let std::collections::btree_map::Entry::Vacant(e) = datasets.entry(n) {
            e.insert(synthetic_dataset(n, spec.n_points, spec.data_seed)?);
        }
    }
    let jobs: Vec<(usize, usize, u64)> = spec
        .configs
        .iter()
        .flat_map(|&(n, d)| spec.seeds.clone().map(move |s| (n, d, s)))
        .collect();
    let run = |&(n, d, seed): &(usize, usize, u64)| {
        run_cell(
            &datasets[&n],
            n,
            d,
            seed,
            &spec.conditions,
            &spec.models,
            &spec.train,
        )
    };
    let nested: Vec<Vec<RunRecord>> = in_pool(spec.workers, || {
        if spec.workers <= 1 {
            jobs.iter().map(run).collect()
        } else {
            jobs.par_iter().map(run).collect()
        }
    })?;
    let mut records: Vec<RunRecord> = nested.into_iter().flatten().collect();
    sort_records(&mut records, &spec.conditions);
    Ok(records)
}

pub const RESULTS_HEADER: &str = "config_n,config_d,model,condition,noise_mode,seed,step,loss";

/// One row per recorded loss. Failed runs contribute no rows.
pub fn write_results_csv<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in records.iter().filter(|r| r.failure.is_none()) {
        let cond = condition_id(&r.condition);
        for (step, loss) in r.losses.iter().enumerate() {
            // `{}` on f64 prints the shortest representation that round-trips.
            writeln!(
                out,
                "{},{},{},\"{}\",{},{},{},{}",
                r.n, r.degree, r.model, cond, r.condition.noise_mode, r.seed, step, loss
            )?;
        }
    }
    Ok(())
}

/// Failed runs, one line each.
pub fn write_failures_csv<W: Write>(records: &[RunRecord], mut out: W) -> Result<()> {
    writeln!(
        out,
        "config_n,config_d,model,condition,noise_mode,seed,message"
    )?;
    for r in records.iter().filter(|r| r.failure.is_some()) {
        let msg = r.failure.as_deref().unwrap_or_default().replace('"', "'");
        writeln!(
            out,
            "{},{},{},\"{}\",{},{},\"{}\"",
            r.n,
            r.degree,
            r.model,
            condition_id(&r.condition),
            r.condition.noise_mode,
            r.seed,
            msg
        )?;
    }
    Ok(())
}

fn split_csv_line(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    for ch in line.chars() {
        match ch {
            '"' => quoted = !quoted,
            ',' if !quoted => fields.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    fields.push(cur);
    fields
}

/// Reads a results CSV back into records (one per run, losses ordered by step).
pub fn read_results_csv<R: BufRead>(input: R) -> Result<Vec<RunRecord>> {
    type Key = (usize, usize, ModelVariant, String, String, u64);
    let mut runs: BTreeMap<Key, BTreeMap<usize, f64>> = BTreeMap::new();
    let mut conditions: BTreeMap<(String, String), EvalCondition> = BTreeMap::new();
    let parse_err = |line: usize, message: String| Error::Parse { line, message };
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if idx == 0 {
            if line.trim() != RESULTS_HEADER {
                return Err(parse_err(
                    line_no,
                    format!("expected header `{RESULTS_HEADER}`"),
                ));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f = split_csv_line(&line);
        if f.len() != 8 {
            return Err(parse_err(
                line_no,
                format!("expected 8 fields, found {}", f.len()),
            ));
        }
        let num = |k: usize| -> Result<u64> {
            f[k].parse()
                .map_err(|_| parse_err(line_no, format!("field {k} `{}` is not an integer", f[k])))
        };
        let n = num(0)? as usize;
        let d = num(1)? as usize;
        let model: ModelVariant = f[2]
            .parse()
            .map_err(|e: Error| parse_err(line_no, e.to_string()))?;
        let mode: NoiseMode = serde_json::from_value(serde_json::Value::String(f[4].clone()))
            .map_err(|_| parse_err(line_no, format!("unknown noise mode `{}`", f[4])))?;
        let cond =
            parse_condition_id(&f[3], mode).map_err(|e| parse_err(line_no, e.to_string()))?;
        conditions.insert((f[3].clone(), f[4].clone()), cond);
        let seed = num(5)?;
        let step = num(6)? as usize;
        let loss: f64 = f[7]
            .parse()
            .map_err(|_| parse_err(line_no, format!("loss `{}` is not a number", f[7])))?;
        let steps = runs
            .entry((n, d, model, f[3].clone(), f[4].clone(), seed))
            .or_default();
        if steps.insert(step, loss).is_some() {
            return Err(parse_err(line_no, format!("duplicate step {step}")));
        }
    }
    let mut records = Vec::with_capacity(runs.len());
    for ((n, degree, model, cid, mode, seed), steps) in runs {
        if steps.keys().copied().ne(0..steps.len()) {
            return Err(invalid(format!(
                "run n={n} d={degree} {model} {cid} seed={seed} has non-contiguous steps"
            )));
        }
        records.push(RunRecord {
            n,
            degree,
            model,
            condition: conditions[&(cid, mode)],
            seed,
            losses: steps.into_values().collect(),
            failure: None,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub mean: f64,
    pub std: f64,
    pub seeds: usize,
}

/// One paired comparison; statistic fields are absent when the test is degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t_stat: Option<f64>,
    #[serde(rename = "n", skip_serializing_if = "Option::is_none")]
    pub n_eff: Option<usize>,
    #[serde(rename = "p", skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(rename = "r", skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Significance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cohens_d: Option<f64>,
    /// Model with the lower mean final loss over the test seeds.
    pub lower_loss: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

impl PairSummary {
    fn from_samples(a: ModelVariant, xs: &[f64], b: ModelVariant, ys: &[f64]) -> Self {
        let (ma, _) = mean_std(xs);
        let (mb, _) = mean_std(ys);
        let lower_loss = match ma.partial_cmp(&mb) {
            Some(std::cmp::Ordering::Less) => a.to_string(),
            Some(std::cmp::Ordering::Greater) => b.to_string(),
            _ => "--".to_string(),
        };
        let d = cohens_d(xs, ys).ok();
        match wilcoxon(xs, ys) {
            Ok(w) => Self::from_result(&w, d, lower_loss),
            Err(e) => Self {
                t_stat: None,
                n_eff: None,
                p: None,
                r: None,
                label: None,
                cohens_d: d,
                lower_loss,
                degenerate: Some(e.to_string()),
            },
        }
    }

    fn from_result(w: &WilcoxonResult, cohens_d: Option<f64>, lower_loss: String) -> Self {
        Self {
            t_stat: Some(w.t_stat),
            n_eff: Some(w.n_eff),
            p: Some(w.p_two_sided),
            r: Some(w.r_rank_biserial),
            label: Some(w.label),
            cohens_d,
            lower_loss,
            degenerate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub models: BTreeMap<String, ModelSummary>,
    pub pairs: BTreeMap<String, PairSummary>,
}

/// Number of configurations reaching each significance level for one
/// comparison under one condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceCount {
    pub pair: String,
    pub condition: String,
    #[serde(rename = "p<0.001")]
    pub p001: usize,
    #[serde(rename = "p<0.01")]
    pub p01: usize,
    #[serde(rename = "p<0.05")]
    pub p05: usize,
    #[serde(rename = "p>=0.05")]
    pub not_significant: usize,
    pub degenerate: usize,
    /// Model with lower mean loss among the significant cases, `--` if none or mixed.
    pub lower_loss: String,
}

/// Mean and standard deviation of the loss at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub curve_seeds: [u64; 2],
    pub test_seeds: [u64; 2],
    /// config id → condition id → cell.
    pub configs: BTreeMap<String, BTreeMap<String, CellSummary>>,
    pub significance_counts: Vec<SignificanceCount>,
    #[serde(skip)]
    pub curves: BTreeMap<(String, String, String), CurveSummary>,
}

const PAIRS: [(ModelVariant, ModelVariant); 3] = [
    (ModelVariant::Original, ModelVariant::RedT),
    (ModelVariant::Original, ModelVariant::RedI),
    (ModelVariant::RedT, ModelVariant::RedI),
];

pub fn pair_name(a: ModelVariant, b: ModelVariant) -> String {
    format!("{a}_vs_{b}")
}

/// Aggregates records: means and curves over `curve_seeds`, Wilcoxon tests
/// over `test_seeds`, and significance counts per comparison and condition.
///
/// Every model present in a `(config, condition)` cell must have a successful
/// run for every seed in both ranges.
pub fn summarize(
    records: &[RunRecord],
    curve_seeds: Range<u64>,
    test_seeds: Range<u64>,
) -> Result<SummaryTable> {
    type Cell = (usize, usize, String);
    let mut by_cell: BTreeMap<Cell, BTreeMap<ModelVariant, BTreeMap<u64, &RunRecord>>> =
        BTreeMap::new();
    for r in records {
        let cell = (r.n, r.degree, condition_id(&r.condition));
        let runs = by_cell.entry(cell).or_default().entry(r.model).or_default();
        if r.failure.is_none() {
            runs.insert(r.seed, r);
        }
    }
    if by_cell.is_empty() {
        return Err(invalid("no records to summarize"));
    }

    let needed: BTreeSet<u64> = curve_seeds.clone().chain(test_seeds.clone()).collect();
    let mut missing = Vec::new();
    for ((n, d, cid), models) in &by_cell {
        for (model, runs) in models {
            for s in needed.iter().filter(|s| !runs.contains_key(s)) {
                missing.push(format!("n{n}_d{d}/{cid}/{model}/seed={s}"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompletePairing(missing));
    }

    let finals = |runs: &BTreeMap<u64, &RunRecord>, seeds: &Range<u64>| -> Vec<f64> {
        seeds
            .clone()
            .map(|s| *runs[&s].losses.last().expect("non-empty losses"))
            .collect()
    };

    let mut configs: BTreeMap<String, BTreeMap<String, CellSummary>> = BTreeMap::new();
    let mut curves = BTreeMap::new();
    let mut tallies: BTreeMap<(String, String), Vec<&PairSummary>> = BTreeMap::new();
    let mut cells = Vec::new();
    for ((n, d, cid), models) in &by_cell {
        let config = format!("n{n}_d{d}");
        let mut model_stats = BTreeMap::new();
        for (model, runs) in models {
            let (mean, std) = mean_std(&finals(runs, &curve_seeds));
            model_stats.insert(
                model.to_string(),
                ModelSummary {
                    mean,
                    std,
                    seeds: curve_seeds.clone().count(),
                },
            );

            let steps = curve_seeds
                .clone()
                .map(|s| runs[&s].losses.len())
                .min()
                .unwrap_or(0);
            let mut curve = CurveSummary {
                mean: Vec::new(),
                std: Vec::new(),
            };
            for k in 0..steps {
                let at: Vec<f64> = curve_seeds.clone().map(|s| runs[&s].losses[k]).collect();
                let (m, sd) = mean_std(&at);
                curve.mean.push(m);
                curve.std.push(sd);
            }
            curves.insert((config.clone(), cid.clone(), model.to_string()), curve);
        }
        let mut pairs = BTreeMap::new();
        for (a, b) in PAIRS {
            if let (Some(ra), Some(rb)) = (models.get(&a), models.get(&b)) {
                let summary = PairSummary::from_samples(
                    a,
                    &finals(ra, &test_seeds),
                    b,
                    &finals(rb, &test_seeds),
                );
                pairs.insert(pair_name(a, b), summary);
            }
        }
        cells.push((
            config,
            cid.clone(),
            CellSummary {
                models: model_stats,
                pairs,
            },
        ));
    }
    for (config, cid, cell) in cells {
        configs.entry(config).or_default().insert(cid, cell);
    }
    for cells in configs.values() {
        for (cid, cell) in cells {
            for (pair, summary) in &cell.pairs {
                tallies
                    .entry((pair.clone(), cid.clone()))
                    .or_default()
                    .push(summary);
            }
        }
    }

    let mut significance_counts = Vec::new();
    for ((pair, condition), summaries) in tallies {
        let mut count = SignificanceCount {
            pair,
            condition,
            p001: 0,
            p01: 0,
            p05: 0,
            not_significant: 0,
            degenerate: 0,
            lower_loss: "--".into(),
        };
        let mut winners = BTreeSet::new();
        for s in summaries {
            match s.label {
                Some(Significance::P001) => count.p001 += 1,
                Some(Significance::P01) => count.p01 += 1,
                Some(Significance::P05) => count.p05 += 1,
                Some(Significance::NotSignificant) => count.not_significant += 1,
                None => count.degenerate += 1,
            }
            if s.label.is_some_and(Significance::is_significant) {
                winners.insert(s.lower_loss.clone());
            }
        }
        if winners.len() == 1 {
            count.lower_loss = winners.into_iter().next().unwrap_or_default();
        }
        significance_counts.push(count);
    }

    Ok(SummaryTable {
        curve_seeds: [curve_seeds.start, curve_seeds.end],
        test_seeds: [test_seeds.start, test_seeds.end],
        configs,
        significance_counts,
        curves,
    })
}

/// Mean ± std loss curves as CSV: `config,condition,model,step,mean,std`.
pub fn write_curves_csv<W: Write>(summary: &SummaryTable, mut out: W) -> Result<()> {
    writeln!(out, "config,condition,model,step,mean,std")?;
    for ((config, cid, model), curve) in &summary.curves {
        for (k, (m, s)) in curve.mean.iter().zip(&curve.std).enumerate() {
            writeln!(out, "{config},\"{cid}\",{model},{k},{m},{s}")?;
        }
    }
    Ok(())
}

/// Digits experiments (binary 0 vs 1 and 10-class one-vs-all).
#[derive(Debug, Clone, PartialEq)]
pub struct MnistSpec {
    /// Network widths `n` (PCA components).
    pub widths: Vec<usize>,
    pub degree: usize,
    pub splits: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub split_seed: u64,
    pub models: Vec<ModelVariant>,
    pub train: TrainConfig,
    pub workers: usize,
}

impl MnistSpec {
    pub fn binary_default() -> Self {
        Self {
            widths: vec![2, 3, 4, 5, 6],
            degree: 2,
            splits: 10,
            n_train: 100,
            n_test: 50,
            split_seed: 0,
            models: ModelVariant::ALL.to_vec(),
            train: TrainConfig::default(),
            workers: 1,
        }
    }

    pub fn ova_default() -> Self {
        Self {
            degree: 3,
            models: vec![ModelVariant::Original, ModelVariant::RedI],
            ..Self::binary_default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.models.is_empty() || self.splits == 0 {
            return Err(invalid(
                "digits experiment needs widths, models and at least one split",
            ));
        }
        if self
            .widths
            .iter()
            .any(|&n| n == 0 || n > crate::data::DIGIT_PIXELS)
            || self.degree == 0
        {
            return Err(invalid("digits widths must lie in 1..=64 and degree >= 1"));
        }
        self.train.validate()
    }
}

/// Outcome of one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub n: usize,
    pub model: ModelVariant,
    pub split: usize,
    pub final_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    /// Cumulative explained variance of the split's PCA.
    pub pca_variance: f64,
    /// One-vs-all only: accuracy on test samples of each digit (`None` if absent from the test set).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class_accuracy: Option<Vec<Option<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistAggregate {
    pub n: usize,
    pub model: ModelVariant,
    pub test_accuracy_mean: f64,
    pub test_accuracy_std: f64,
    pub final_loss_mean: f64,
    pub final_loss_std: f64,
    /// Mean per-class test accuracy across splits (one-vs-all only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class_accuracy: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistComparison {
    pub n: usize,
    pub pair: String,
    pub accuracy: PairSummary,
    pub final_loss: PairSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnistReport {
    pub task: String,
    pub splits: Vec<SplitResult>,
    pub aggregates: Vec<MnistAggregate>,
    pub comparisons: Vec<MnistComparison>,
    /// Loss curves (one-vs-all: mean over the ten classifiers) as run records;
    /// `seed` holds the split index.
    #[serde(skip)]
    pub records: Vec<RunRecord>,
}

fn accuracy(pred: &[f64], truth: &[f64]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

fn binary_targets(labels: &[u8]) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| if l == 1 { 1.0 } else { -1.0 })
        .collect()
}

fn dataset_from(inputs: &[Vec<f64>], targets: Vec<f64>, source: String) -> Result<Dataset<f64>> {
    Dataset::new(
        inputs.to_vec(),
        targets,
        DatasetMeta {
            source,
            raw_target_range: None,
        },
    )
}

fn binary_split(
    prepared: &PreparedSplit,
    n: usize,
    split: usize,
    spec: &MnistSpec,
) -> Result<(Vec<SplitResult>, Vec<RunRecord>)> {
    let ideal = EvalCondition::ideal();
    let degree = spec.degree;
    let train_y = binary_targets(&prepared.train_labels);
    let test_y = binary_targets(&prepared.test_labels);
    let data = dataset_from(
        &prepared.train_inputs,
        train_y.clone(),
        format!("digits 0/1 split {split}"),
    )?;
    let seed = split as u64;
    let disc = [n as u64, degree as u64];
    let mut zero = RngStream::new(0, 0);

    let mut source: Option<std::result::Result<NetworkParams<f64>, String>> = None;
    let mut results = Vec::new();
    let mut records = Vec::new();
    let mut order: Vec<ModelVariant> = spec.models.clone();
    order.sort();
    if order.contains(&ModelVariant::RedT) && !order.contains(&ModelVariant::Original) {
        order.insert(0, ModelVariant::Original);
    }
    for model in order {
        let params0 = match model {
            ModelVariant::RedT => match &source {
                Some(Ok(p)) => transfer_params(p),
                Some(Err(msg)) => {
                    results.push(failed_split(n, model, split, prepared, msg));
                    continue;
                }
                None => unreachable!("original precedes red_t"),
            },
            _ => init_params(n, degree, &mut init_stream(seed, model, &disc)),
        };
        let (record, params) = train_record(
            &params0,
            &data,
            n,
            degree,
            model,
            &ideal,
            &spec.train,
            seed,
            RngStream::new(0, 0),
        );
        if model == ModelVariant::Original {
            source = Some(
                params
                    .clone()
                    .ok_or_else(|| record.failure.clone().unwrap_or_default()),
            );
        }
        let keep = spec.models.contains(&model);
        match params {
            Some(p) => {
                let cfg = NetworkConfig {
                    n,
                    degree,
                    mode: model.mode(),
                };
                let train_pred: Vec<f64> =
                    predict(&p, &prepared.train_inputs, &cfg, &ideal, &mut zero)?
                        .into_iter()
                        .map(binary_predict)
                        .collect();
                let test_pred: Vec<f64> =
                    predict(&p, &prepared.test_inputs, &cfg, &ideal, &mut zero)?
                        .into_iter()
                        .map(binary_predict)
                        .collect();
                if keep {
                    results.push(SplitResult {
                        n,
                        model,
                        split,
                        final_loss: *record.losses.last().expect("losses"),
                        train_accuracy: accuracy(&train_pred, &train_y),
                        test_accuracy: accuracy(&test_pred, &test_y),
                        pca_variance: prepared.pca.cumulative_explained_variance(),
                        per_class_accuracy: None,
                        failure: None,
                    });
                }
            }
            None if keep => results.push(failed_split(
                n,
                model,
                split,
                prepared,
                record.failure.as_deref().unwrap_or_default(),
            )),
            None => {}
        }
        if keep {
            records.push(record);
        }
    }
    Ok((results, records))
}

fn failed_split(
    n: usize,
    model: ModelVariant,
    split: usize,
    prepared: &PreparedSplit,
    msg: &str,
) -> SplitResult {
    SplitResult {
        n,
        model,
        split,
        final_loss: f64::NAN,
        train_accuracy: f64::NAN,
        test_accuracy: f64::NAN,
        pca_variance: prepared.pca.cumulative_explained_variance(),
        per_class_accuracy: None,
        failure: Some(msg.to_string()),
    }
}

fn ova_split(
    prepared: &PreparedSplit,
    n: usize,
    split: usize,
    model: ModelVariant,
    spec: &MnistSpec,
) -> Result<(SplitResult, RunRecord)> {
    let ideal = EvalCondition::ideal();
    let degree = spec.degree;
    let cfg = NetworkConfig {
        n,
        degree,
        mode: model.mode(),
    };
    let mut zero = RngStream::new(0, 0);
    let mut train_out = vec![vec![0.0; 10]; prepared.train_inputs.len()];
    let mut test_out = vec![vec![0.0; 10]; prepared.test_inputs.len()];
    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(10);
    let mut failure = None;
    for class in 0..10u8 {
        let targets = ova_labels(&prepared.train_labels, class);
        let data = dataset_from(
            &prepared.train_inputs,
            targets,
            format!("digits ova class {class} split {split}"),
        )?;
        let params0: NetworkParams<f64> = init_params(
            n,
            degree,
            &mut init_stream(
                split as u64,
                model,
                &[n as u64, degree as u64, class as u64],
            ),
        );
        let (record, params) = train_record(
            &params0,
            &data,
            n,
            degree,
            model,
            &ideal,
            &spec.train,
            split as u64,
            RngStream::new(0, 0),
        );
        let Some(params) = params else {
            failure = Some(format!(
                "class {class}: {}",
                record.failure.unwrap_or_default()
            ));
            break;
        };
        for (row, y) in train_out.iter_mut().zip(predict(
            &params,
            &prepared.train_inputs,
            &cfg,
            &ideal,
            &mut zero,
        )?) {
            row[class as usize] = y;
        }
        for (row, y) in test_out.iter_mut().zip(predict(
            &params,
            &prepared.test_inputs,
            &cfg,
            &ideal,
            &mut zero,
        )?) {
            row[class as usize] = y;
        }
        curves.push(record.losses);
    }
    if let Some(msg) = failure {
        let rec = failed_record(n, degree, model, &ideal, split as u64, msg.clone());
        return Ok((failed_split(n, model, split, prepared, &msg), rec));
    }

    let steps = curves[0].len();
    let mean_curve: Vec<f64> = (0..steps)
        .map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / curves.len() as f64)
        .collect();
    let classify = |outs: &[Vec<f64>]| -> Result<Vec<f64>> {
        outs.iter()
            .map(|o| ova_predict(o).map(|c| c as f64))
            .collect()
    };
    let train_truth: Vec<f64> = prepared.train_labels.iter().map(|&l| l as f64).collect();
    let test_truth: Vec<f64> = prepared.test_labels.iter().map(|&l| l as f64).collect();
    let test_pred = classify(&test_out)?;
    let per_class = (0..10u8)
        .map(|c| {
            let idx: Vec<usize> = (0..test_truth.len())
                .filter(|&i| prepared.test_labels[i] == c)
                .collect();
            (!idx.is_empty()).then(|| {
                idx.iter()
                    .filter(|&&i| test_pred[i] == test_truth[i])
                    .count() as f64
                    / idx.len() as f64
            })
        })
        .collect();
    let result = SplitResult {
        n,
        model,
        split,
        final_loss: *mean_curve.last().expect("non-empty curve"),
        train_accuracy: accuracy(&classify(&train_out)?, &train_truth),
        test_accuracy: accuracy(&test_pred, &test_truth),
        pca_variance: prepared.pca.cumulative_explained_variance(),
        per_class_accuracy: Some(per_class),
        failure: None,
    };
    let record = RunRecord {
        n,
        degree,
        model,
        condition: ideal,
        seed: split as u64,
        losses: mean_curve,
        failure: None,
    };
    Ok((result, record))
}

fn aggregate(
    task: &str,
    spec: &MnistSpec,
    mut splits: Vec<SplitResult>,
    mut records: Vec<RunRecord>,
) -> MnistReport {
    splits.sort_by_key(|r| (r.n, r.model, r.split));
    records.sort_by_key(|r| (r.n, r.model, r.seed));
    let mut aggregates = Vec::new();
    let mut comparisons = Vec::new();
    for &n in &spec.widths {
        let ok = |m: ModelVariant| -> Vec<&SplitResult> {
            splits
                .iter()
                .filter(|r| r.n == n && r.model == m && r.failure.is_none())
                .collect()
        };
        let mut models = spec.models.clone();
        models.sort();
        for &m in &models {
            let rows = ok(m);
            if rows.is_empty() {
                continue;
            }
            let (am, asd) = mean_std(&rows.iter().map(|r| r.test_accuracy).collect::<Vec<_>>());
            let (lm, lsd) = mean_std(&rows.iter().map(|r| r.final_loss).collect::<Vec<_>>());
            let per_class = rows[0].per_class_accuracy.as_ref().map(|_| {
                (0..10)
                    .map(|c| {
                        let vals: Vec<f64> = rows
                            .iter()
                            .filter_map(|r| r.per_class_accuracy.as_ref().and_then(|v| v[c]))
                            .collect();
                        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                    })
                    .collect()
            });
            aggregates.push(MnistAggregate {
                n,
                model: m,
                test_accuracy_mean: am,
                test_accuracy_std: asd,
                final_loss_mean: lm,
                final_loss_std: lsd,
                per_class_accuracy: per_class,
            });
        }
        for (a, b) in PAIRS {
            if !(models.contains(&a) && models.contains(&b)) {
                continue;
            }
            let (ra, rb) = (ok(a), ok(b));
            let common: Vec<usize> = ra
                .iter()
                .map(|r| r.split)
                .filter(|s| rb.iter().any(|q| q.split == *s))
                .collect();
            let pick = |rows: &[&SplitResult], f: fn(&SplitResult) -> f64| -> Vec<f64> {
                common
                    .iter()
                    .map(|s| f(rows.iter().find(|r| r.split == *s).expect("common split")))
                    .collect()
            };
            let summary = |xs: Vec<f64>, ys: Vec<f64>| PairSummary::from_samples(a, &xs, b, &ys);
            comparisons.push(MnistComparison {
                n,
                pair: pair_name(a, b),
                accuracy: summary(
                    pick(&ra, |r| r.test_accuracy),
                    pick(&rb, |r| r.test_accuracy),
                ),
                final_loss: summary(pick(&ra, |r| r.final_loss), pick(&rb, |r| r.final_loss)),
            });
        }
    }
    MnistReport {
        task: task.to_string(),
        splits,
        aggregates,
        comparisons,
        records,
    }
}

/// Binary 0-vs-1 classification with sign-rule predictions.
pub fn run_mnist_binary(spec: &MnistSpec, digits: &Digits) -> Result<MnistReport> {
    spec.validate()?;
    let subset = digits.filter_classes(&[0, 1]);
    let plan = make_splits(
        &subset.labels,
        spec.n_test,
        spec.n_train,
        spec.splits,
        spec.split_seed,
        &[0, 1],
    )?;
    let jobs: Vec<(usize, usize)> = spec
        .widths
        .iter()
        .flat_map(|&n| (0..spec.splits).map(move |s| (n, s)))
        .collect();
    let run = |&(n, s): &(usize, usize)| -> Result<(Vec<SplitResult>, Vec<RunRecord>)> {
        let prepared = prepare_split(&subset, &plan.trains[s], &plan.test, n)?;
        binary_split(&prepared, n, s, spec)
    };
    let outs: Vec<Result<_>> = in_pool(spec.workers, || {
        if spec.workers <= 1 {
            jobs.iter().map(run).collect()
        } else {
            jobs.par_iter().map(run).collect()
        }
    })?;
    let mut splits = Vec::new();
    let mut records = Vec::new();
    for out in outs {
        let (s, r) = out?;
        splits.extend(s);
        records.extend(r);
    }
    Ok(aggregate("binary_0_vs_1", spec, splits, records))
}

/// Ten-class one-vs-all classification; Red-T is not part of this task.
pub fn run_mnist_ova(spec: &MnistSpec, digits: &Digits) -> Result<MnistReport> {
    spec.validate()?;
    if spec.models.contains(&ModelVariant::RedT) {
        return Err(invalid("one-vs-all compares original and red_i only"));
    }
    let classes: Vec<u8> = (0..10).collect();
    let plan = make_splits(
        &digits.labels,
        spec.n_test,
        spec.n_train,
        spec.splits,
        spec.split_seed,
        &classes,
    )?;
    let jobs: Vec<(usize, usize, ModelVariant)> = spec
        .widths
        .iter()
        .flat_map(|&n| {
            (0..spec.splits).flat_map(move |s| spec.models.iter().map(move |&m| (n, s, m)))
        })
        .collect();
    let run = |&(n, s, m): &(usize, usize, ModelVariant)| -> Result<(SplitResult, RunRecord)> {
        let prepared = prepare_split(digits, &plan.trains[s], &plan.test, n)?;
        ova_split(&prepared, n, s, m, spec)
    };
    let outs: Vec<Result<_>> = in_pool(spec.workers, || {
        if spec.workers <= 1 {
            jobs.iter().map(run).collect()
        } else {
            jobs.par_iter().map(run).collect()
        }
    })?;
    let mut splits = Vec::new();
    let mut records = Vec::new();
    for out in outs {
        let (s, r) = out?;
        splits.push(s);
        records.push(r);
    }
    Ok(aggregate("ova_10_class", spec, splits, records))
}

/// Per-split accuracies as CSV.
pub fn write_accuracy_csv<W: Write>(report: &MnistReport, mut out: W) -> Result<()> {
    writeln!(
        out,
        "config_n,model,split,final_loss,train_accuracy,test_accuracy,pca_variance"
    )?;
    for r in &report.splits {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n, r.model, r.split, r.final_loss, r.train_accuracy, r.test_accuracy, r.pca_variance
        )?;
    }
    Ok(())
}

/// Per-class accuracy matrix (rows: digit, columns: width × model) as CSV.
pub fn write_per_class_csv<W: Write>(report: &MnistReport, mut out: W) -> Result<()> {
    let cols: Vec<&MnistAggregate> = report
        .aggregates
        .iter()
        .filter(|a| a.per_class_accuracy.is_some())
        .collect();
    let header: Vec<String> = cols
        .iter()
        .map(|a| format!("n{}_{}", a.n, a.model))
        .collect();
    writeln!(out, "digit,{}", header.join(","))?;
    for c in 0..10 {
        let row: Vec<String> = cols
            .iter()
            .map(|a| match a.per_class_accuracy.as_ref().and_then(|v| v[c]) {
                Some(v) => v.to_string(),
                None => String::new(),
            })
            .collect();
        writeln!(out, "{c},{}", row.join(","))?;
    }
    Ok(())
}
