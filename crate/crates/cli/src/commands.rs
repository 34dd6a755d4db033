use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use taskcp::conformal::{ErrorRate, Method, Reduction};
use taskcp::multiround::{simulate, SimulationConfig};
use taskcp::testbed::{
    generate_dataset, make_problem, read_round, write_round, Dataset, ProblemSpec,
    DEFAULT_TASK_WEIGHT_NORM,
};
use taskcp::validation::{monte_carlo, MonteCarloConfig, MonteCarloResult, DEFAULT_SIZE_EDGES};

use crate::acceptance::{self, SuiteConfig};
use crate::config::{
    any, finite, in_unit_interval, positive, Entry, Format, List, Resolver, RoundSelection, Source,
};
use crate::error::CliError;
use crate::table::{ensure_dir, write_file, write_table, Cell, Table};

pub const PROBLEM_FILE: &str = "problem.json";

pub fn round_file(k: usize) -> String {
    format!("round_{k}.jsonl")
}

/// Contents of `problem.json` in a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub seed: u64,
    pub n: usize,
    pub samples_p: usize,
    pub problem: ProblemSpec,
    pub accelerations: Vec<f64>,
    /// Resolved settings of the `generate` run, as `key -> value`.
    pub config: BTreeMap<String, String>,
}

fn echo_block(entries: &[Entry]) -> String {
    entries
        .iter()
        .map(|e| format!("# {} = {} [{}]\n", e.key, e.value, e.source))
        .collect()
}

pub fn load_dataset(dir: &Path) -> Result<(DatasetMeta, Dataset), CliError> {
    let meta_path = dir.join(PROBLEM_FILE);
    let text = fs::read_to_string(&meta_path)
        .map_err(|e| CliError::io(format!("reading {}", meta_path.display()), e))?;
    let meta: DatasetMeta = serde_json::from_str(&text)
        .map_err(|e| CliError::io(format!("parsing {}", meta_path.display()), e.into()))?;
    let rounds = (1..=meta.problem.rows_per_round.len())
        .map(|k| {
            let path = dir.join(round_file(k));
            let f = fs::File::open(&path)
                .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
            Ok(read_round(BufReader::new(f), k)?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let data = Dataset::from_rounds(rounds)?;
    if data.n_samples() != meta.n {
        return Err(CliError::Config(format!(
            "{}: expected {} samples per round, found {}",
            dir.display(),
            meta.n,
            data.n_samples()
        )));
    }
    Ok((meta, data))
}

/// Row counts `ceil(dim / 2^(rounds - k))` for `k = 1..=rounds`.
fn geometric_rows(dim: usize, rounds: usize) -> Result<Vec<usize>, CliError> {
    let rows: Vec<usize> = (1..=rounds)
        .map(|k| {
            let div = 1usize
                .checked_shl((rounds - k) as u32)
                .unwrap_or(usize::MAX);
            dim.div_ceil(div)
        })
        .collect();
    if rows.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config(format!(
            "{rounds} rounds do not fit in dimension {dim} with doubling rows; pass --rows"
        )));
    }
    Ok(rows)
}

fn methods(r: &mut Resolver) -> Result<Vec<Method>, CliError> {
    let list: List<Method> = r.get("method", List(Method::ALL.to_vec()), |l: &List<Method>| {
        let mut seen = l.0.clone();
        seen.sort();
        seen.dedup();
        if seen.len() == l.0.len() {
            Ok(())
        } else {
            Err("methods must not repeat".into())
        }
    })?;
    Ok(list.0)
}

fn alpha(r: &mut Resolver) -> Result<ErrorRate, CliError> {
    let a: f64 = r.get("alpha", 0.1, in_unit_interval)?;
    ErrorRate::new(a).map_err(|e| CliError::Config(format!("alpha: {e}")))
}

fn dataset_notes(r: &mut Resolver, meta: &DatasetMeta) {
    r.note("data.seed", meta.seed, Source::Dataset);
    r.note("data.n", meta.n, Source::Dataset);
    r.note("data.samples_p", meta.samples_p, Source::Dataset);
    r.note("data.dim", meta.problem.dim, Source::Dataset);
    r.note(
        "data.rows",
        List(meta.problem.rows_per_round.clone()),
        Source::Dataset,
    );
    r.note("data.noise_std", meta.problem.noise_std, Source::Dataset);
}

fn dataset_with_p(
    r: &mut Resolver,
    meta: &DatasetMeta,
    data: Dataset,
) -> Result<Dataset, CliError> {
    match r.optional::<usize>("samples_p", positive)? {
        Some(p) if p > meta.samples_p => Err(CliError::Config(format!(
            "samples_p: dataset has only {} samples per record",
            meta.samples_p
        ))),
        Some(p) => Ok(data.truncate_samples(p)?),
        None => Ok(data),
    }
}

pub fn generate(r: &mut Resolver, stdout: &mut dyn Write) -> Result<(), CliError> {
    let seed: u64 = r.get("seed", 0, any)?;
    let n: usize = r.get("n", 600, positive)?;
    let p: usize = r.get("samples_p", 32, positive)?;
    let dim: usize = r.get("dim", 16, positive)?;
    let rows = match r.optional::<List<usize>>("rows", any)? {
        Some(list) => list.0,
        None => {
            let rounds: usize = r.get("rounds", 4, |c: &usize| {
                if *c >= 1 {
                    Ok(())
                } else {
                    Err("need at least one round".into())
                }
            })?;
            geometric_rows(dim, rounds)?
        }
    };
    let spec = ProblemSpec {
        dim,
        rows_per_round: rows,
        noise_std: r.get("noise_std", 0.3, positive)?,
        prior_std: r.get("prior_std", 1.0, positive)?,
        task_weight_norm: r.get("task_weight_norm", DEFAULT_TASK_WEIGHT_NORM, |v: &f64| {
            if *v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err("must be finite and >= 0".into())
            }
        })?,
        task_bias: r.get("task_bias", 0.0, finite)?,
    };
    let out = PathBuf::from(r.required::<String>("out")?);
    let problem = make_problem(&spec, seed)?;
    let data = generate_dataset(&problem, n, p, seed)?;

    let entries = r.take_entries();
    ensure_dir(&out)?;
    let meta = DatasetMeta {
        seed,
        n,
        samples_p: p,
        accelerations: problem.accelerations(),
        problem: spec,
        config: entries
            .iter()
            .map(|e| (e.key.clone(), e.value.clone()))
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    json.push('\n');
    write_file(&out.join(PROBLEM_FILE), json.as_bytes())?;
    for (k, records) in data.rounds().iter().enumerate() {
        let mut buf = format!("# taskcp dataset round {}\n", k + 1).into_bytes();
        buf.extend_from_slice(echo_block(&entries).as_bytes());
        write_round(&mut buf, k + 1, records).expect("writing to memory");
        write_file(&out.join(round_file(k + 1)), &buf)?;
    }
    writeln!(
        stdout,
        "wrote {} rounds x {n} samples x {p} posterior draws to {}",
        data.n_rounds(),
        out.display()
    )
    .map_err(|e| CliError::io("stdout", e))
}

fn theory_moments(d: Option<&taskcp::validation::CoverageDistribution>) -> (Cell, Cell) {
    match d {
        Some(d) => (d.mean().into(), d.variance().into()),
        None => (Cell::Missing, Cell::Missing),
    }
}

pub const MC_SUMMARY_COLUMNS: &[&str] = &[
    "method",
    "round",
    "acceleration",
    "n_cal",
    "n_test",
    "trials",
    "target_coverage",
    "mean_coverage",
    "se_coverage",
    "var_coverage",
    "se_var_coverage",
    "theory_mean",
    "theory_var",
    "theory_mean_stated",
    "theory_var_stated",
    "mean_interval_length",
    "se_interval_length",
    "class0_coverage",
    "class0_count",
    "class1_coverage",
    "class1_count",
];

fn summary_row(res: &MonteCarloResult, round: usize, accel: f64) -> Vec<Cell> {
    let s = &res.summary;
    let (tm, tv) = theory_moments(s.theory_rank.as_ref());
    let (sm, sv) = theory_moments(s.theory_stated.as_ref());
    vec![
        s.method.as_str().into(),
        round.into(),
        accel.into(),
        s.n_cal.into(),
        s.n_test.into(),
        s.trials.into(),
        s.target_coverage.into(),
        s.mean_coverage.into(),
        s.se_coverage.into(),
        s.var_coverage.into(),
        s.se_var_coverage.into(),
        tm,
        tv,
        sm,
        sv,
        s.mean_interval_length.into(),
        s.se_interval_length.into(),
        s.class_coverage.class0.coverage().into(),
        s.class_coverage.class0.count.into(),
        s.class_coverage.class1.coverage().into(),
        s.class_coverage.class1.count.into(),
    ]
}

fn trial_table(res: &MonteCarloResult, round: usize) -> Table {
    let mut t = Table::new(
        format!("montecarlo trials {} round {round}", res.summary.method),
        &[
            "trial",
            "qhat",
            "covered",
            "n_test",
            "empirical_coverage",
            "mean_interval_length",
            "class0_coverage",
            "class1_coverage",
        ],
    );
    for tr in &res.trials {
        t.push(vec![
            tr.trial.into(),
            tr.qhat.into(),
            tr.covered.into(),
            tr.n_test.into(),
            tr.empirical_coverage.into(),
            tr.mean_interval_length.into(),
            tr.class_coverage.class0.coverage().into(),
            tr.class_coverage.class1.coverage().into(),
        ]);
    }
    t
}

fn histogram_table(res: &MonteCarloResult, round: usize) -> Table {
    let s = &res.summary;
    let mut t = Table::new(
        format!("montecarlo coverage histogram {} round {round}", s.method),
        &[
            "covered",
            "empirical_coverage",
            "count",
            "frequency",
            "theory_mass",
            "theory_mass_stated",
        ],
    );
    let exact = s.theory_rank.map(|d| d.pmf_all());
    let stated = s.theory_stated.map(|d| d.pmf_all());
    for (k, &count) in s.coverage_histogram.iter().enumerate() {
        t.push(vec![
            k.into(),
            (k as f64 / s.n_test as f64).into(),
            count.into(),
            (count as f64 / s.trials as f64).into(),
            exact.as_ref().map(|m| m[k]).into(),
            stated.as_ref().map(|m| m[k]).into(),
        ]);
    }
    t
}

pub fn montecarlo(r: &mut Resolver, stdout: &mut dyn Write) -> Result<(), CliError> {
    let data_dir = PathBuf::from(r.required::<String>("data")?);
    let (meta, data) = load_dataset(&data_dir)?;
    dataset_notes(r, &meta);
    let data = dataset_with_p(r, &meta, data)?;
    let methods = methods(r)?;
    let rounds = r
        .get("rounds", RoundSelection::All, any)?
        .resolve(data.n_rounds())?;
    let alpha = alpha(r)?;
    let trials: usize = r.get("trials", 2000, positive)?;
    let cal_fraction: f64 = r.get("cal_fraction", 0.7, in_unit_interval)?;
    let seed: u64 = r.get("seed", 0, any)?;
    let reduction: Reduction = r.get("reduction", Reduction::First, any)?;
    let size_edges: List<f64> = r.get("size_edges", List(DEFAULT_SIZE_EDGES.to_vec()), any)?;
    let p_sweep: Option<List<usize>> = r.optional("p_sweep", |l: &List<usize>| {
        match l.0.iter().find(|&&p| p == 0 || p > meta.samples_p) {
            Some(p) => Err(format!("{p} not in 1..={}", meta.samples_p)),
            None => Ok(()),
        }
    })?;
    let sweep_round: usize = r.get("sweep_round", 1, |k: &usize| {
        if (1..=data.n_rounds()).contains(k) {
            Ok(())
        } else {
            Err(format!("must lie in 1..={}", data.n_rounds()))
        }
    })?;
    let format: Format = r.get("format", Format::Tsv, any)?;
    let out = PathBuf::from(r.required::<String>("out")?);
    r.note("target_coverage", alpha.target_coverage(), Source::Default);

    let config = |method: Method| MonteCarloConfig {
        method,
        alpha,
        trials,
        cal_fraction,
        seed,
        reduction,
        size_edges: size_edges.0.clone(),
    };
    let mut results = Vec::new();
    for &m in &methods {
        for &k in &rounds {
            results.push((m, k, monte_carlo(data.round(k)?, &config(m))?));
        }
    }
    let mut sweep = Vec::new();
    if let Some(ps) = &p_sweep {
        for &m in &methods {
            for &p in &ps.0 {
                let truncated = data.truncate_samples(p)?;
                sweep.push((
                    m,
                    p,
                    monte_carlo(truncated.round(sweep_round)?, &config(m))?,
                ));
            }
        }
    }

    let entries = r.take_entries();
    ensure_dir(&out)?;
    let mut summary = Table::new("montecarlo summary", MC_SUMMARY_COLUMNS);
    let mut strata = Table::new(
        "montecarlo size-stratified coverage",
        &[
            "method", "round", "lower", "upper", "covered", "count", "coverage",
        ],
    );
    for (m, k, res) in &results {
        summary.push(summary_row(res, *k, meta.accelerations[k - 1]));
        for s in &res.summary.size_strata {
            strata.push(vec![
                m.as_str().into(),
                (*k).into(),
                s.lower.into(),
                s.upper.into(),
                s.tally.covered.into(),
                s.tally.count.into(),
                s.tally.coverage().into(),
            ]);
        }
        write_table(
            &out,
            &format!("trials_{m}_round{k}"),
            &trial_table(res, *k),
            &entries,
            format,
        )?;
        write_table(
            &out,
            &format!("hist_{m}_round{k}"),
            &histogram_table(res, *k),
            &entries,
            format,
        )?;
    }
    write_table(&out, "summary", &summary, &entries, format)?;
    write_table(&out, "strata", &strata, &entries, format)?;
    if !sweep.is_empty() {
        let mut t = Table::new(
            "montecarlo sample-count sweep",
            &[
                "method",
                "samples_p",
                "round",
                "mean_interval_length",
                "se_interval_length",
                "mean_coverage",
                "se_coverage",
            ],
        );
        for (m, p, res) in &sweep {
            let s = &res.summary;
            t.push(vec![
                m.as_str().into(),
                (*p).into(),
                sweep_round.into(),
                s.mean_interval_length.into(),
                s.se_interval_length.into(),
                s.mean_coverage.into(),
                s.se_coverage.into(),
            ]);
        }
        write_table(&out, "psweep", &t, &entries, format)?;
    }
    writeln!(
        stdout,
        "ran {} Monte-Carlo studies of {trials} trials; results in {}",
        results.len() + sweep.len(),
        out.display()
    )
    .map_err(|e| CliError::io("stdout", e))
}

pub fn multiround(r: &mut Resolver, stdout: &mut dyn Write) -> Result<(), CliError> {
    let data_dir = PathBuf::from(r.required::<String>("data")?);
    let (meta, data) = load_dataset(&data_dir)?;
    dataset_notes(r, &meta);
    if data.n_rounds() < 2 {
        return Err(CliError::Config(
            "multi-round simulation needs at least two rounds".into(),
        ));
    }
    let data = dataset_with_p(r, &meta, data)?;
    let methods = methods(r)?;
    let alpha = alpha(r)?;
    let tau: f64 = r.get("tau", acceptance::DEFAULT_TAU, |t: &f64| {
        if *t > 0.0 && !t.is_nan() {
            Ok(())
        } else {
            Err("must be positive".into())
        }
    })?;
    let trials: usize = r.get("trials", 1, positive)?;
    let cal_fraction: f64 = r.get("cal_fraction", 0.7, in_unit_interval)?;
    let seed: u64 = r.get("seed", 0, any)?;
    let group_size: usize = r.get("group_size", 8, positive)?;
    let reduction: Reduction = r.get("reduction", Reduction::First, any)?;
    let format: Format = r.get("format", Format::Tsv, any)?;
    let out = PathBuf::from(r.required::<String>("out")?);
    r.note("target_coverage", alpha.target_coverage(), Source::Default);

    let mut reports = Vec::new();
    for &method in &methods {
        let cfg = SimulationConfig {
            method,
            alpha,
            tau,
            cal_fraction,
            seed,
            group_size,
            reduction,
        };
        for t in 0..trials {
            reports.push(simulate(data.rounds(), &meta.accelerations, &cfg, t)?);
        }
    }

    let entries = r.take_entries();
    ensure_dir(&out)?;
    let rounds = data.n_rounds();
    let mut summary_cols = vec![
        "method",
        "trial",
        "n_cal",
        "n_test",
        "average_acceleration",
        "empirical_coverage",
        "coverage_se",
        "average_max_center_error",
        "max_center_error_se",
        "exhausted_fraction",
        "degenerate",
    ];
    let qhat_cols: Vec<String> = (1..=rounds).map(|k| format!("qhat_round{k}")).collect();
    summary_cols.extend(qhat_cols.iter().map(String::as_str));
    let mut summary = Table::new("multiround summary", &summary_cols);
    let mut hist = Table::new(
        "multiround stopping rounds",
        &[
            "method",
            "trial",
            "round",
            "acceleration",
            "count",
            "fraction",
            "exhausted",
        ],
    );
    let outcome_cols = [
        "trial",
        "sample",
        "group",
        "final_round",
        "acceleration",
        "exhausted",
        "degenerate",
        "lower",
        "upper",
        "length",
        "true_output",
        "covered",
        "center_error",
    ];
    let mut outcome_tables: BTreeMap<Method, Table> = BTreeMap::new();
    for rep in &reports {
        let s = &rep.summary;
        let mut row: Vec<Cell> = vec![
            s.method.as_str().into(),
            s.trial.into(),
            s.n_cal.into(),
            s.n_test.into(),
            s.average_acceleration.into(),
            s.empirical_coverage.into(),
            s.coverage_se.into(),
            s.average_max_center_error.into(),
            s.max_center_error_se.into(),
            s.histogram.exhausted_fraction().into(),
            s.degenerate.into(),
        ];
        row.extend(s.qhats.iter().map(|&q| Cell::from(q)));
        summary.push(row);
        for (k, (&count, frac)) in s
            .histogram
            .counts
            .iter()
            .zip(s.histogram.fractions())
            .enumerate()
        {
            hist.push(vec![
                s.method.as_str().into(),
                s.trial.into(),
                (k + 1).into(),
                meta.accelerations[k].into(),
                count.into(),
                frac.into(),
                false.into(),
            ]);
        }
        hist.push(vec![
            s.method.as_str().into(),
            s.trial.into(),
            rounds.into(),
            meta.accelerations[rounds - 1].into(),
            s.histogram.exhausted.into(),
            s.histogram.exhausted_fraction().into(),
            true.into(),
        ]);
        let table = outcome_tables.entry(s.method).or_insert_with(|| {
            Table::new(format!("multiround outcomes {}", s.method), &outcome_cols)
        });
        for o in &rep.outcomes {
            let oc = &o.outcome;
            table.push(vec![
                s.trial.into(),
                o.sample.into(),
                o.group.into(),
                oc.final_round.into(),
                meta.accelerations[oc.final_round - 1].into(),
                oc.exhausted.into(),
                oc.degenerate.into(),
                oc.final_interval.lower().into(),
                oc.final_interval.upper().into(),
                oc.final_interval.length().into(),
                oc.true_output.into(),
                oc.covered().into(),
                oc.center_error.into(),
            ]);
        }
    }
    write_table(&out, "multiround_summary", &summary, &entries, format)?;
    write_table(&out, "multiround_rounds", &hist, &entries, format)?;
    for (m, t) in &outcome_tables {
        write_table(&out, &format!("outcomes_{m}"), t, &entries, format)?;
    }
    writeln!(
        stdout,
        "simulated {} method(s) x {trials} split(s); results in {}",
        methods.len(),
        out.display()
    )
    .map_err(|e| CliError::io("stdout", e))
}

pub fn validate(r: &mut Resolver, stdout: &mut dyn Write) -> Result<(), CliError> {
    let defaults = SuiteConfig::default();
    let cfg = SuiteConfig {
        seed: r.get("seed", defaults.seed, any)?,
        trials: r.get("trials", defaults.trials, |t: &usize| {
            if *t >= 2 {
                Ok(())
            } else {
                Err("need at least two trials".into())
            }
        })?,
    };
    let format: Format = r.get("format", Format::Tsv, any)?;
    let out = r.optional::<String>("out", any)?.map(PathBuf::from);
    let entries = r.take_entries();

    let reports = acceptance::run_suite(&cfg);
    let mut text = String::new();
    for rep in &reports {
        text.push_str(&rep.to_string());
        text.push('\n');
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    text.push_str(&format!(
        "{} of {} criteria passed\n",
        reports.len() - failed,
        reports.len()
    ));
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::io("stdout", e))?;
    if let Some(path) = out {
        let mut t = Table::new("acceptance", &["criterion", "name", "passed", "detail"]);
        for rep in &reports {
            t.push(vec![
                rep.id.into(),
                rep.name.into(),
                rep.passed.into(),
                rep.detail.clone().into(),
            ]);
        }
        write_file(&path, t.render(&entries, format).as_bytes())?;
    }
    if failed > 0 {
        return Err(CliError::Acceptance {
            failed,
            total: reports.len(),
        });
    }
    Ok(())
}
