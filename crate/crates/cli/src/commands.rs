use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use oodil::cluster::{kmeans_baseline, label_corpus, train_scc, ClusterAssignment, ClusterModel};
use oodil::demos::Corpus;
use oodil::envs::{EnvConfig, Outcome};
use oodil::imitate::{evaluate, stage_rng, train_weighted_gail, CurvePoint, EvalStats, ImitationRun, Stage, Variant};
use oodil::numcore::Checkpoint;
use oodil::rl::{Greedy, Policy};
use oodil::transfer::{
    sampling_distribution, score_new, train_transferability, transition_weights, weights_from_csv, weights_to_csv,
    TransferabilityModel, TransitionWeight,
};

use crate::config::RunConfig;
use crate::manifest::{Manifest, FAILED_MARKER};
use crate::viz;

const POLICY_KIND: &str = "policy";

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn csv_string<S: Serialize>(rows: &[S]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// File name of a source's demonstrations.
pub fn demo_file_name(tag: &str) -> String {
    let safe: String = tag
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || ".-_".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}.jsonl")
}

/// One demonstration file per configured source, generated in config order
/// from the run seed.
pub fn gen_demos(cfg: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if cfg.sources.is_empty() {
        bail!("no demonstration sources configured");
    }
    let mut rng = stage_rng(cfg.seed, Stage::Demos);
    let mut paths = Vec::with_capacity(cfg.sources.len());
    for (i, source) in cfg.sources.iter().enumerate() {
        let corpus = cfg
            .demos
            .driver
            .corpus(&source.tag, &source.env, cfg.demos.per_source, i as u64 * 1_000_000, &mut rng)
            .with_context(|| format!("generating demonstrations for source {}", source.tag))?;
        let path = out_dir.join(demo_file_name(&source.tag));
        write_file(&path, corpus.to_jsonl()?)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Merges demonstration files. A directory stands for every `.jsonl` in it.
pub fn load_demos(paths: &[PathBuf]) -> Result<Corpus> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            inner.sort();
            files.extend(inner);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no demonstration files given");
    }
    let parts = files
        .iter()
        .map(|f| Corpus::from_jsonl(&read_file(f)?).with_context(|| format!("parsing {}", f.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus::merge(parts)?)
}

pub fn load_env(path: Option<&Path>, cfg: &RunConfig) -> Result<EnvConfig> {
    match path {
        Some(p) => {
            let env: EnvConfig = serde_json::from_str(&read_file(p)?).with_context(|| format!("parsing {}", p.display()))?;
            env.validate()?;
            Ok(env)
        }
        None => Ok(cfg.target.clone()),
    }
}

pub fn cluster(cfg: &RunConfig, demos: &Corpus, model_out: &Path, labels_out: &Path) -> Result<(ClusterModel, ClusterAssignment)> {
    let (model, _) = train_scc(demos, &cfg.cluster, &mut stage_rng(cfg.seed, Stage::Cluster))?;
    let labels = label_corpus(&model, demos, &mut stage_rng(cfg.seed, Stage::Label))?;
    write_file(model_out, model.to_checkpoint()?.to_json()?)?;
    write_file(labels_out, labels.to_json()?)?;
    Ok((model, labels))
}

/// Labels of the variant's partition; `None` for plain GAIL.
pub fn variant_labels(cfg: &RunConfig, demos: &Corpus, dir: &Path) -> Result<Option<ClusterAssignment>> {
    Ok(match cfg.variant {
        Variant::NaiveGail => None,
        Variant::Ours => Some(cluster(cfg, demos, &dir.join("model.json"), &dir.join("labels.json"))?.1),
        Variant::OursWoCluster => {
            let labels = ClusterAssignment {
                k: 1,
                labels: demos.trajectories().iter().map(|t| (t.id, 0)).collect(),
            };
            write_file(&dir.join("labels.json"), labels.to_json()?)?;
            Some(labels)
        }
        Variant::KmeansVariant => {
            let labels = kmeans_baseline(
                demos,
                cfg.cluster.k,
                cfg.cluster.sub_len,
                cfg.cluster.stride,
                &mut stage_rng(cfg.seed, Stage::Cluster),
            )?;
            write_file(&dir.join("labels.json"), labels.to_json()?)?;
            Some(labels)
        }
    })
}

pub fn transfer(
    cfg: &RunConfig,
    demos: &Corpus,
    labels: &ClusterAssignment,
    target: &EnvConfig,
    model_out: &Path,
    weights_out: &Path,
) -> Result<(TransferabilityModel, Vec<TransitionWeight>)> {
    let model = train_transferability(demos, labels, target, &cfg.rl, &cfg.transfer, cfg.seed)?;
    let weights = transition_weights(&model, demos, labels)?;
    write_file(model_out, model.to_checkpoint()?.to_json()?)?;
    write_file(weights_out, weights_to_csv(&weights)?)?;
    Ok((model, weights))
}

pub fn load_weights(path: &Path) -> Result<Vec<TransitionWeight>> {
    Ok(weights_from_csv(&read_file(path)?).with_context(|| format!("parsing {}", path.display()))?)
}

pub fn save_policy(policy: &Policy, path: &Path) -> Result<()> {
    let mut ck = Checkpoint::new(POLICY_KIND);
    policy.write_checkpoint(&mut ck, "policy")?;
    write_file(path, ck.to_json()?)
}

pub fn load_policy(path: &Path) -> Result<Policy> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    ck.expect_kind(POLICY_KIND)?;
    Ok(Policy::read_checkpoint(&ck, "policy")?)
}

#[derive(Serialize)]
struct CurveRow<'a> {
    variant: &'a str,
    seed: u64,
    env_steps: usize,
    mean_return: f64,
    goal_rate: f64,
}

fn curve_csv(variant: Variant, seed: u64, curve: &[CurvePoint]) -> Result<String> {
    let rows: Vec<CurveRow> = curve
        .iter()
        .map(|p| CurveRow {
            variant: variant.as_str(),
            seed,
            env_steps: p.env_steps,
            mean_return: p.mean_return,
            goal_rate: p.goal_rate,
        })
        .collect();
    csv_string(&rows)
}

/// Final imitation, on `weights` when given and uniformly otherwise.
pub fn train(
    cfg: &RunConfig,
    demos: &Corpus,
    weights: Option<&[TransitionWeight]>,
    target: &EnvConfig,
    policy_out: &Path,
    curve_out: &Path,
) -> Result<(Policy, Vec<CurvePoint>)> {
    let dist = weights.map(sampling_distribution).transpose()?;
    let run = train_weighted_gail(
        target,
        demos,
        dist.as_ref(),
        &cfg.rl,
        &cfg.imitate,
        &mut stage_rng(cfg.seed, Stage::Imitate),
    )?;
    save_policy(&run.policy, policy_out)?;
    write_file(curve_out, curve_csv(cfg.variant, cfg.seed, &run.curve)?)?;
    Ok((run.policy, run.curve))
}

#[derive(Serialize)]
struct EpisodeRow {
    episode: usize,
    #[serde(rename = "return")]
    ret: f64,
    length: usize,
    outcome: &'static str,
}

/// Mean-action episodes in `target`; per-episode CSV plus summary.
pub fn eval(cfg: &RunConfig, policy: &Policy, target: &EnvConfig, episodes: usize, out: &Path) -> Result<EvalStats> {
    let mut env = target.build()?;
    let mut rng = stage_rng(cfg.seed, Stage::Eval);
    let stats = evaluate(&Greedy(policy), env.as_mut(), episodes, &mut rng)?;
    // replay the same seeded episodes for the per-episode table
    let mut rng = stage_rng(cfg.seed, Stage::Eval);
    let max = env.max_steps();
    let rows: Vec<EpisodeRow> = (0..episodes)
        .map(|i| {
            let ep = oodil::envs::rollout(env.as_mut(), &Greedy(policy), &mut rng, max);
            EpisodeRow {
                episode: i,
                ret: ep.undiscounted_return(),
                length: ep.len(),
                outcome: ep.outcome.as_str(),
            }
        })
        .collect();
    debug_assert!(rows.iter().all(|r| r.outcome != Outcome::Running.as_str()));
    write_file(out, csv_string(&rows)?)?;
    Ok(stats)
}

pub fn score_new_cmd(cluster_model: &Path, tmodel: &Path, demos: &Corpus, seed: u64, out: &Path) -> Result<Vec<TransitionWeight>> {
    let clusters = ClusterModel::load(cluster_model).with_context(|| format!("loading {}", cluster_model.display()))?;
    let model = TransferabilityModel::load(tmodel).with_context(|| format!("loading {}", tmodel.display()))?;
    let (_, weights) = score_new(&clusters, &model, demos, &mut stage_rng(seed, Stage::Label))?;
    write_file(out, weights_to_csv(&weights)?)?;
    Ok(weights)
}

pub fn viz_cmd(demos: &Corpus, weights: &[TransitionWeight], target: &EnvConfig, out: &Path) -> Result<()> {
    let EnvConfig::Driving(d) = target else {
        bail!("visualization needs a driving environment");
    };
    write_file(out, viz::transferability_svg(demos, weights, d)?)
}

/// Runs every stage of `cfg.variant` under `cfg.out_dir`. On failure the
/// directory keeps whatever was written plus a failure marker.
pub fn pipeline(cfg: &RunConfig) -> Result<ImitationRun> {
    let dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let _ = std::fs::remove_file(dir.join(FAILED_MARKER));
    let mut manifest = Manifest::new(cfg);
    let result = run_stages(cfg, &dir, &mut manifest);
    if let Err(e) = &result {
        manifest.failure = Some(format!("{e:#}"));
        write_file(&dir.join(FAILED_MARKER), format!("{e:#}\n"))?;
    }
    manifest.finish(&dir)?;
    result
}

fn run_stages(cfg: &RunConfig, dir: &Path, manifest: &mut Manifest) -> Result<ImitationRun> {
    let demo_dir = dir.join("demos");
    let t = Instant::now();
    let files: Vec<PathBuf> = cfg.sources.iter().map(|s| demo_dir.join(demo_file_name(&s.tag))).collect();
    if !files.iter().all(|f| f.exists()) {
        gen_demos(cfg, &demo_dir).context("stage gen-demos")?;
    }
    let demos = load_demos(&files).context("stage 1: loading demonstrations")?;
    manifest.stage("gen-demos", t);

    let t = Instant::now();
    let labels = variant_labels(cfg, &demos, dir).context("stage cluster")?;
    manifest.stage("cluster", t);

    let t = Instant::now();
    let weights = match &labels {
        Some(l) => Some(
            transfer(cfg, &demos, l, &cfg.target, &dir.join("tmodel.json"), &dir.join("weights.csv"))
                .context("stage transfer")?,
        ),
        None => None,
    };
    manifest.stage("transfer", t);

    let t = Instant::now();
    let (policy, curve) = train(
        cfg,
        &demos,
        weights.as_ref().map(|w| w.1.as_slice()),
        &cfg.target,
        &dir.join("policy.json"),
        &dir.join("curve.csv"),
    )
    .context("stage train")?;
    manifest.stage("train", t);

    let t = Instant::now();
    let stats = eval(cfg, &policy, &cfg.target, cfg.imitate.eval_episodes, &dir.join("eval.csv")).context("stage eval")?;
    write_file(&dir.join("summary.json"), serde_json::to_string_pretty(&stats)?)?;
    manifest.stage("eval", t);

    if let Some((_, w)) = &weights {
        let t = Instant::now();
        viz_cmd(&demos, w, &cfg.target, &dir.join("transferability.svg")).context("stage viz")?;
        manifest.stage("viz", t);
    }
    Ok(ImitationRun {
        variant: cfg.variant,
        seed: cfg.seed,
        discriminators: weights.as_ref().map_or(0, |(m, _)| m.trained().iter().filter(|&&t| t).count()),
        curve,
        final_eval: stats,
        weights: weights.map(|w| w.1),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    Lambda,
}

impl std::str::FromStr for SweepAxis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" | "K" => Ok(SweepAxis::K),
            "lambda" => Ok(SweepAxis::Lambda),
            _ => Err(anyhow!("sweep axis must be k or lambda, got {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub final_return: f64,
    pub goal_rate: f64,
}

/// One pipeline per value per seed, each in its own subdirectory; writes
/// `sweep.csv` and `sweep.svg` to `cfg.out_dir`.
pub fn sweep(cfg: &RunConfig, axis: SweepAxis, values: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() || seeds.is_empty() {
        bail!("sweep needs at least one value and one seed");
    }
    let name = match axis {
        SweepAxis::K => "k",
        SweepAxis::Lambda => "lambda",
    };
    let mut rows = Vec::new();
    for &value in values {
        for &seed in seeds {
            let mut run = cfg.clone();
            run.seed = seed;
            match axis {
                SweepAxis::K => {
                    if value < 1.0 || value.fract() != 0.0 {
                        bail!("K must be a positive integer, got {value}");
                    }
                    run.cluster.k = value as usize;
                }
                SweepAxis::Lambda => run.cluster.lambda = value,
            }
            run.out_dir = cfg.out_dir.join(format!("{name}_{value}")).join(format!("seed_{seed}"));
            // every run regenerates the same demos from its own seed
            let result = pipeline(&run).with_context(|| format!("sweep {name}={value} seed {seed}"))?;
            rows.push(SweepRow {
                value,
                seed,
                final_return: result.final_eval.mean_return,
                goal_rate: result.final_eval.goal_rate,
            });
        }
    }
    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record([name, "seed", "final_return", "goal_rate"])?;
    for r in &rows {
        csv.write_record([r.value.to_string(), r.seed.to_string(), r.final_return.to_string(), r.goal_rate.to_string()])?;
    }
    write_file(&cfg.out_dir.join("sweep.csv"), csv.into_inner()?)?;
    let points: Vec<viz::SweepPoint> = values
        .iter()
        .map(|&v| {
            let rs: Vec<f64> = rows.iter().filter(|r| r.value == v).map(|r| r.final_return).collect();
            let n = rs.len() as f64;
            let mean = rs.iter().sum::<f64>() / n;
            let std = (rs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
            viz::SweepPoint { value: v, mean, std }
        })
        .collect();
    write_file(&cfg.out_dir.join("sweep.svg"), viz::sweep_svg(name, &points)?)?;
    Ok(rows)
}
