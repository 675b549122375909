//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use colink_core::baselines::BaselineModel;
use colink_core::dataset::{
    generate_synthetic, ingest_checkins, ingest_social_links, ingest_user_meta, preprocess, snap_to_grid,
    CheckInDataset, PreprocessParams, SocialGraph, SyntheticParams, UserMeta, META_HEADER,
};
use colink_core::defense::{
    self, generalize, hide, recover, replace, GeoLevel, Mechanism, ObfuscationSpec, PopularityTable, SemLevel,
    DEFAULT_WALK_STEPS,
};
use colink_core::embedding::{train, EmbeddingMatrix, TrainMode};
use colink_core::evaluation::{
    attack_scores, auc, baseline_scores, read_scores_csv, roc, run_experiment, run_one, sample_pairs,
    write_report_csv, write_scores_csv, AttackParams, ExperimentConfig, ExperimentInputs, ReportRow, Scorer,
    StageSeeds,
};
use colink_core::graph::BipartiteGraph;
use colink_core::similarity::Measure;
use colink_core::walks::{generate_walks, WalkCorpus};
use serde_json::{json, Value};

use crate::config::ConfigFile;
use crate::{Cli, Command, Common, DefenseArgs, InputArgs, Levels, PreprocessArgs, SweepArgs, SynthArgs, TrainArgs, WalkArgs};

struct Ctx {
    cfg: ConfigFile,
    seed: u64,
    out: PathBuf,
    threads: Option<usize>,
    deterministic: bool,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let cfg = match &common.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::empty(),
        };
        let seed = cfg.value(common.seed, "seed", 0u64)?;
        let out = cfg.value(common.output_dir.clone(), "output-dir", PathBuf::from("out"))?;
        let threads = cfg.pick(common.threads, "threads")?;
        if threads == Some(0) {
            bail!("--threads must be at least 1");
        }
        let deterministic = common.deterministic || cfg.get::<bool>("deterministic")?.unwrap_or(false);
        if let Some(n) = threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("--threads: cannot configure the worker pool")?;
        }
        std::fs::create_dir_all(&out).with_context(|| format!("--output-dir: cannot create {}", out.display()))?;
        Ok(Ctx {
            cfg,
            seed,
            out,
            threads,
            deterministic,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn train_mode(&self) -> TrainMode {
        match self.threads {
            Some(n) if n > 1 && !self.deterministic => TrainMode::ParallelRelaxed { threads: n },
            _ => TrainMode::DeterministicSequential,
        }
    }

    /// Writes `<stage>.meta.json` with the master seed, derived substream
    /// seeds and resolved settings.
    fn write_meta(&self, stage: &str, substreams: Value, settings: Value) -> Result<()> {
        let meta = json!({
            "stage": stage,
            "master_seed": self.seed,
            "substreams": substreams,
            "settings": settings,
        });
        let path = self.out(&format!("{stage}.meta.json"));
        std::fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli.common)?;
    match cli.command {
        Command::Ingest { checkins, social, meta } => ingest(&ctx, checkins, social, meta),
        Command::Preprocess {
            checkins,
            meta,
            social,
            pre,
        } => preprocess_cmd(&ctx, checkins, meta, social, &pre),
        Command::Synth { synth } => synth_cmd(&ctx, &synth),
        Command::Walk { checkins, walk } => walk_cmd(&ctx, checkins, &walk),
        Command::Train { walks, train } => train_cmd(&ctx, walks, &train),
        Command::Score {
            embedding,
            checkins,
            social,
            measure,
            model,
        } => score_cmd(&ctx, embedding, checkins, social, measure, model),
        Command::Evaluate { scores } => evaluate_cmd(&ctx, scores),
        Command::Defend { checkins, defense } => defend_cmd(&ctx, checkins, &defense),
        Command::Utility { original, obfuscated } => utility_cmd(&ctx, original, obfuscated),
        Command::Sweep {
            inputs,
            pre,
            walk,
            train,
            defense,
            grid,
        } => sweep_cmd(&ctx, &inputs, &pre, &walk, &train, &defense, &grid),
        Command::Run {
            inputs,
            synth,
            pre,
            walk,
            train,
            defense,
        } => run_cmd(&ctx, &inputs, &synth, &pre, &walk, &train, &defense),
    }
}

fn preprocess_params(ctx: &Ctx, a: &PreprocessArgs) -> Result<(PreprocessParams, Option<f64>)> {
    let d = PreprocessParams::default();
    let c = &ctx.cfg;
    let params = PreprocessParams {
        min_checkins: c.value(a.min_checkins, "min-checkins", d.min_checkins)?,
        min_distinct_locations: c.value(a.min_distinct_locations, "min-distinct-locations", d.min_distinct_locations)?,
        percentile_low: c.value(a.percentile_low, "percentile-low", d.percentile_low)?,
        percentile_high: c.value(a.percentile_high, "percentile-high", d.percentile_high)?,
    };
    let grid = c.pick(a.grid_deg, "grid-deg")?;
    if let Some(g) = grid {
        if !(g.is_finite() && g > 0.0) {
            bail!("--grid-deg must be a positive number, got {g}");
        }
    }
    Ok((params, grid))
}

fn synth_params(ctx: &Ctx, a: &SynthArgs) -> Result<SyntheticParams> {
    let d = SyntheticParams::default();
    let c = &ctx.cfg;
    Ok(SyntheticParams {
        n_users: c.value(a.n_users, "n-users", d.n_users)?,
        n_locations: c.value(a.n_locations, "n-locations", d.n_locations)?,
        n_communities: c.value(a.n_communities, "n-communities", d.n_communities)?,
        checkins_per_user: c.value(a.checkins_per_user, "checkins-per-user", d.checkins_per_user)?,
        intra_friend_prob: c.value(a.intra_friend_prob, "intra-friend-prob", d.intra_friend_prob)?,
        noise_prob: c.value(a.noise_prob, "noise-prob", d.noise_prob)?,
        seed: ctx.seed,
    })
}

fn attack_params(ctx: &Ctx, w: &WalkArgs, t: &TrainArgs) -> Result<AttackParams> {
    let d = AttackParams::default();
    let c = &ctx.cfg;
    let p = AttackParams {
        walk_times: c.value(w.walk_times, "walk-times", d.walk_times)?,
        walk_length: c.value(w.walk_length, "walk-length", d.walk_length)?,
        dim: c.value(t.dim, "dim", d.dim)?,
        window: c.value(t.window, "window", d.window)?,
        negatives: c.value(t.negatives, "negatives", d.negatives)?,
        learning_rate: c.value(t.learning_rate, "learning-rate", d.learning_rate)?,
        epochs: c.value(t.epochs, "epochs", d.epochs)?,
        unigram_power: c.value(t.unigram_power, "unigram-power", d.unigram_power)?,
        measure: c.value(t.measure, "measure", d.measure)?,
        mode: ctx.train_mode(),
    };
    p.train_config(0).validate().map_err(flag_error)?;
    if p.walk_times < 1 {
        bail!("--walk-times must be at least 1");
    }
    if p.walk_length < 2 {
        bail!("--walk-length must be at least 2");
    }
    Ok(p)
}

/// Rewrites a core parameter error so it names the flag.
fn flag_error(e: colink_core::Error) -> anyhow::Error {
    match e {
        colink_core::Error::InvalidParameter { name, reason } => {
            anyhow!("--{}: {reason}", name.replace('_', "-"))
        }
        other => other.into(),
    }
}

fn defense_spec(ctx: &Ctx, a: &DefenseArgs, mechanism: Mechanism, rho: Option<f64>, levels: Option<Levels>) -> Result<ObfuscationSpec> {
    let c = &ctx.cfg;
    let rho = match rho {
        Some(r) => r,
        None => c.pick(a.rho, "rho")?.unwrap_or(0.5),
    };
    let walk_steps = c.value(a.walk_steps, "walk-steps", DEFAULT_WALK_STEPS)?;
    let levels = match levels {
        Some(l) => l,
        None => c.pick(a.levels, "levels")?.unwrap_or(Levels(GeoLevel::Low, SemLevel::Low)),
    };
    let spec = match mechanism {
        Mechanism::Hiding => ObfuscationSpec::hiding(rho, 0),
        Mechanism::Replacement => ObfuscationSpec::replacement(rho, walk_steps, 0),
        Mechanism::Generalization => ObfuscationSpec::generalization(levels.0, levels.1, 0),
    };
    spec.validate().map_err(flag_error)?;
    Ok(spec)
}

fn popularity(ctx: &Ctx, a: &DefenseArgs) -> Result<Option<PopularityTable>> {
    ctx.cfg
        .pick(a.popularity.clone(), "popularity")?
        .map(|p| PopularityTable::read_csv(&p).with_context(|| "--popularity".to_string()))
        .transpose()
}

fn load_checkins(ctx: &Ctx, flag: Option<PathBuf>, key: &str) -> Result<CheckInDataset> {
    let path = ctx.cfg.path(flag, key)?;
    ingest_checkins(&path).with_context(|| format!("--{key}"))
}

fn load_social(ctx: &Ctx, flag: Option<PathBuf>, users: &std::collections::BTreeSet<String>) -> Result<SocialGraph> {
    let path = ctx.cfg.path(flag, "social")?;
    let links = ingest_social_links(&path, users).context("--social")?;
    if links.skipped_unknown > 0 {
        log::warn!("{} friendship rows name unknown users and were skipped", links.skipped_unknown);
    }
    Ok(links.graph)
}

fn load_meta(ctx: &Ctx, flag: Option<PathBuf>) -> Result<Option<UserMeta>> {
    ctx.cfg
        .pick(flag, "meta")?
        .map(|p| ingest_user_meta(&p).context("--meta"))
        .transpose()
}

/// Check-ins, friendships and metadata from files, or the synthetic
/// generator when no check-in file is configured.
fn load_inputs(ctx: &Ctx, a: &InputArgs, synth: &SynthArgs) -> Result<(CheckInDataset, SocialGraph, Option<UserMeta>, Value)> {
    match ctx.cfg.pick(a.checkins.clone(), "checkins")? {
        Some(path) => {
            let ds = ingest_checkins(&path).context("--checkins")?;
            let social = load_social(ctx, a.social.clone(), ds.users())?;
            let meta = load_meta(ctx, a.meta.clone())?;
            Ok((ds, social, meta, json!({ "checkins": path })))
        }
        None => {
            let p = synth_params(ctx, synth)?;
            let (ds, social) = generate_synthetic(&p).map_err(flag_error)?;
            Ok((ds, social, None, json!({ "synthetic": p })))
        }
    }
}

fn write_meta_csv(path: &Path, meta: &UserMeta) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("cannot write {}", path.display()))?);
    writeln!(w, "{META_HEADER}")?;
    for (u, c) in meta.iter() {
        writeln!(w, "{u},{c}")?;
    }
    w.flush()?;
    Ok(())
}

fn ingest(ctx: &Ctx, checkins: Option<PathBuf>, social: Option<PathBuf>, meta: Option<PathBuf>) -> Result<()> {
    let ds = load_checkins(ctx, checkins, "checkins")?;
    ds.write_csv(&ctx.out("checkins.csv"))?;
    println!("checkins={} users={} locations={}", ds.len(), ds.users().len(), ds.locations().len());
    if ctx.cfg.pick(social.clone(), "social")?.is_some() {
        let g = load_social(ctx, social, ds.users())?;
        g.write_csv(&ctx.out("social.csv"))?;
        println!("friendships={}", g.len());
    }
    if let Some(m) = load_meta(ctx, meta)? {
        write_meta_csv(&ctx.out("meta.csv"), &m)?;
        println!("meta_rows={}", m.len());
    }
    ctx.write_meta("ingest", json!({}), json!({}))
}

fn preprocess_cmd(
    ctx: &Ctx,
    checkins: Option<PathBuf>,
    meta: Option<PathBuf>,
    social: Option<PathBuf>,
    a: &PreprocessArgs,
) -> Result<()> {
    let ds = load_checkins(ctx, checkins, "checkins")?;
    let meta = load_meta(ctx, meta)?;
    let (params, grid) = preprocess_params(ctx, a)?;
    let mut kept = preprocess(&ds, meta.as_ref(), &params).map_err(flag_error)?;
    if let Some(g) = grid {
        kept = snap_to_grid(&kept, g).map_err(flag_error)?;
    }
    kept.write_csv(&ctx.out("preprocessed.csv"))?;
    println!("users={} checkins={} locations={}", kept.users().len(), kept.len(), kept.locations().len());
    if ctx.cfg.pick(social.clone(), "social")?.is_some() {
        let g = load_social(ctx, social, kept.users())?;
        g.write_csv(&ctx.out("social.csv"))?;
        println!("friendships={}", g.len());
    }
    ctx.write_meta("preprocess", json!({}), json!({ "preprocess": params, "grid_deg": grid }))
}

fn synth_cmd(ctx: &Ctx, a: &SynthArgs) -> Result<()> {
    let p = synth_params(ctx, a)?;
    let (ds, social) = generate_synthetic(&p).map_err(flag_error)?;
    ds.write_csv(&ctx.out("checkins.csv"))?;
    social.write_csv(&ctx.out("social.csv"))?;
    println!("users={} checkins={} friendships={}", ds.users().len(), ds.len(), social.len());
    ctx.write_meta(
        "synth",
        json!({ "synth-coords": p.seed, "synth-friends": p.seed, "synth-checkins": p.seed }),
        json!(p),
    )
}

fn walk_cmd(ctx: &Ctx, checkins: Option<PathBuf>, w: &WalkArgs) -> Result<()> {
    let ds = load_checkins(ctx, checkins, "checkins")?;
    let attack = attack_params(ctx, w, &TrainArgs::default())?;
    let seeds = StageSeeds::new(ctx.seed);
    let graph = BipartiteGraph::build(&ds)?;
    let corpus = generate_walks(&graph, attack.walk_params(seeds.walks)).map_err(flag_error)?;
    corpus.write_dump(&ctx.out("walks.txt"))?;
    println!("traces={} nodes={}", corpus.traces().len(), graph.node_count());
    ctx.write_meta(
        "walk",
        json!({ "walks": seeds.walks }),
        json!({ "walk_times": attack.walk_times, "walk_length": attack.walk_length }),
    )
}

fn train_cmd(ctx: &Ctx, walks: Option<PathBuf>, t: &TrainArgs) -> Result<()> {
    let path = ctx.cfg.path(walks, "walks")?;
    let corpus = WalkCorpus::read_dump(&path).context("--walks")?;
    let attack = attack_params(ctx, &WalkArgs::default(), t)?;
    let seeds = StageSeeds::new(ctx.seed);
    let cfg = attack.train_config(seeds.train);
    let emb = train(&corpus, &cfg).map_err(flag_error)?;
    emb.write_dump(&ctx.out("embedding.txt"))?;
    println!("nodes={} dim={}", emb.len(), emb.dim());
    ctx.write_meta("train", json!({ "init": seeds.train, "negatives": seeds.train }), json!(cfg))
}

fn score_cmd(
    ctx: &Ctx,
    embedding: Option<PathBuf>,
    checkins: Option<PathBuf>,
    social: Option<PathBuf>,
    measure: Option<Measure>,
    model: Option<BaselineModel>,
) -> Result<()> {
    let ds = load_checkins(ctx, checkins, "checkins")?;
    let social = load_social(ctx, social, ds.users())?;
    let seeds = StageSeeds::new(ctx.seed);
    let pairs = sample_pairs(&social, ds.users(), seeds.pairs)?;
    let model = ctx.cfg.pick(model, "model")?;
    let (scores, label) = match model {
        Some(m) => (baseline_scores(&pairs, &ds, m, seeds.scores)?, Some(m.name())),
        None => {
            let path = ctx.cfg.path(embedding, "embedding")?;
            let emb = EmbeddingMatrix::read_dump(&path).context("--embedding")?;
            let measure = ctx.cfg.value(measure, "measure", Measure::default())?;
            (attack_scores(&pairs, &emb, measure, seeds.scores)?, None)
        }
    };
    write_scores_csv(&ctx.out("scores.csv"), &pairs, &scores, label)?;
    println!("pairs={} positives={}", pairs.len(), pairs.positives());
    ctx.write_meta(
        "score",
        json!({ "pairs": seeds.pairs, "scores": seeds.scores }),
        json!({ "model": label }),
    )
}

fn evaluate_cmd(ctx: &Ctx, scores: Option<PathBuf>) -> Result<()> {
    let path = ctx.cfg.path(scores, "scores")?;
    let scored = read_scores_csv(&path).context("--scores")?;
    if scored.unlabeled > 0 {
        log::warn!("{} rows without a label were skipped", scored.unlabeled);
    }
    let labels = scored.pairs.labels();
    let a = auc(&scored.scores, &labels)?;
    let curve = roc(&scored.scores, &labels)?;
    curve.write_csv(&ctx.out("roc.csv"))?;
    let row = ReportRow {
        experiment: "evaluate".into(),
        config_json: "{}".into(),
        seed: ctx.seed,
        n_pairs: scored.scores.len(),
        auc: a,
    };
    write_report_csv(&ctx.out("report.csv"), &[row])?;
    println!("auc={a:?}");
    Ok(())
}

fn defend_cmd(ctx: &Ctx, checkins: Option<PathBuf>, a: &DefenseArgs) -> Result<()> {
    let ds = load_checkins(ctx, checkins, "checkins")?;
    let mechanism = ctx
        .cfg
        .pick(a.mechanism, "mechanism")?
        .ok_or_else(|| anyhow!("missing --mechanism (hiding, replacement or generalization)"))?;
    let spec = defense_spec(ctx, a, mechanism, None, None)?;
    let seeds = StageSeeds::new(ctx.seed);
    let obfuscated = match mechanism {
        Mechanism::Hiding => hide(&ds, spec.rho, seeds.defense)?.dataset,
        Mechanism::Replacement => replace(&ds, spec.rho, spec.walk_steps, seeds.defense)?.dataset,
        Mechanism::Generalization => {
            let gen = generalize(&ds, spec.geo_level, spec.sem_level)?;
            gen.dataset.write_csv(&ctx.out("generalized.csv"))?;
            if let Some(c) = &gen.containment {
                c.write_csv(&ctx.out("containment.csv"))?;
            }
            let pop = popularity(ctx, a)?.unwrap_or_else(|| PopularityTable::from_dataset(&ds));
            let (recovered, rate) = recover(&gen, &pop, seeds.defense)?;
            println!("generalized_locations={} recovery_rate={rate}", gen.dataset.locations().len());
            recovered
        }
    };
    obfuscated.write_csv(&ctx.out("obfuscated.csv"))?;
    println!("checkins={} of {}", obfuscated.len(), ds.len());
    ctx.write_meta("defend", json!({ "defense": seeds.defense }), json!(spec))
}

fn utility_cmd(ctx: &Ctx, original: Option<PathBuf>, obfuscated: Option<PathBuf>) -> Result<()> {
    let orig = load_checkins(ctx, original, "original")?;
    let obf = load_checkins(ctx, obfuscated, "obfuscated")?;
    // users whose check-ins were all hidden have no rows in the file
    let obf = if obf.users().is_subset(orig.users()) {
        CheckInDataset::new(obf.checkins().to_vec(), orig.users().iter().cloned())?
    } else {
        obf
    };
    let report = defense::utility(&orig, &obf)?;
    report.write_csv(&ctx.out("utility.csv"))?;
    println!("utility={} users={}", report.aggregate, report.per_user.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep_cmd(
    ctx: &Ctx,
    inputs: &InputArgs,
    pre: &PreprocessArgs,
    walk: &WalkArgs,
    train: &TrainArgs,
    defense: &DefenseArgs,
    grid: &SweepArgs,
) -> Result<()> {
    let c = &ctx.cfg;
    let (ds, social, meta, source) = load_inputs(ctx, inputs, &SynthArgs::default())?;
    let (base_pre, base_grid) = preprocess_params(ctx, pre)?;
    let attack = attack_params(ctx, walk, train)?;
    let n_seeds = c.value(grid.seeds, "seeds", 1u64)?;
    if n_seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let grids: Vec<Option<f64>> = match c.list(grid.grid_list.clone(), "grid-list")? {
        Some(l) => l.into_iter().map(Some).collect(),
        None => vec![base_grid],
    };
    let mins = c.list(grid.min_checkins_list.clone(), "min-checkins-list")?.unwrap_or(vec![base_pre.min_checkins]);
    let defenses: Vec<Option<ObfuscationSpec>> = match c.pick(defense.mechanism, "mechanism")? {
        None => vec![None],
        Some(Mechanism::Generalization) => match c.list(grid.levels_list.clone(), "levels-list")? {
            Some(levels) => levels
                .into_iter()
                .map(|l| defense_spec(ctx, defense, Mechanism::Generalization, None, Some(l)).map(Some))
                .collect::<Result<_>>()?,
            None => vec![Some(defense_spec(ctx, defense, Mechanism::Generalization, None, None)?)],
        },
        Some(m) => match c.list(grid.rho_list.clone(), "rho-list")? {
            Some(rhos) => rhos
                .into_iter()
                .map(|r| defense_spec(ctx, defense, m, Some(r), None).map(Some))
                .collect::<Result<_>>()?,
            None => vec![Some(defense_spec(ctx, defense, m, None, None)?)],
        },
    };
    let mut scorers = vec![Scorer::Attack(attack)];
    if let Some(list) = c.pick(grid.baselines.clone(), "baselines")? {
        scorers.extend(list.0.into_iter().map(|model| Scorer::Baseline { model }));
    }
    let buckets: Vec<Option<usize>> = match c.pick(grid.common_locations, "common-locations")? {
        Some(k) => (0..=k).map(Some).collect(),
        None => vec![None],
    };
    let prefix = c.pick(grid.name.clone(), "name")?.unwrap_or_default();

    let mut configs = Vec::new();
    for s in 0..n_seeds {
        for &g in &grids {
            for &m in &mins {
                for d in &defenses {
                    for scorer in &scorers {
                        for &k in &buckets {
                            let name = match scorer {
                                Scorer::Attack(_) => "attack".to_string(),
                                Scorer::Baseline { model } => model.name().to_string(),
                            };
                            configs.push(ExperimentConfig {
                                name: format!("{prefix}{name}"),
                                preprocess: PreprocessParams {
                                    min_checkins: m,
                                    ..base_pre
                                },
                                grid_deg: g,
                                defense: *d,
                                scorer: *scorer,
                                common_locations: k,
                                seed: ctx.seed + s,
                            });
                        }
                    }
                }
            }
        }
    }
    let pop = popularity(ctx, defense)?;
    let inputs = ExperimentInputs {
        checkins: &ds,
        social: &social,
        meta: meta.as_ref(),
        popularity: pop.as_ref(),
    };
    let outcomes = run_experiment(&inputs, &configs)?;
    let rows: Vec<ReportRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    write_report_csv(&ctx.out("report.csv"), &rows)?;
    for o in &outcomes {
        let mut line = format!("{} seed={} n_pairs={} auc={}", o.row.experiment, o.row.seed, o.row.n_pairs, o.row.auc);
        if let Some(u) = o.utility {
            line += &format!(" utility={u}");
        }
        if let Some(r) = o.recovery_rate {
            line += &format!(" recovery_rate={r}");
        }
        println!("{line}");
    }
    ctx.write_meta(
        "sweep",
        json!({ "per_seed": "pairs, defense, walks, train, scores derived from each row's seed" }),
        json!({ "input": source, "configurations": configs.len() }),
    )
}

#[allow(clippy::too_many_arguments)]
fn run_cmd(
    ctx: &Ctx,
    inputs: &InputArgs,
    synth: &SynthArgs,
    pre: &PreprocessArgs,
    walk: &WalkArgs,
    train: &TrainArgs,
    defense: &DefenseArgs,
) -> Result<()> {
    let (ds, social, meta, source) = load_inputs(ctx, inputs, synth)?;
    let (params, grid) = preprocess_params(ctx, pre)?;
    let attack = attack_params(ctx, walk, train)?;
    let spec = ctx
        .cfg
        .pick(defense.mechanism, "mechanism")?
        .map(|m| defense_spec(ctx, defense, m, None, None))
        .transpose()?;
    let cfg = ExperimentConfig {
        name: "run".into(),
        preprocess: params,
        grid_deg: grid,
        defense: spec,
        scorer: Scorer::Attack(attack),
        common_locations: None,
        seed: ctx.seed,
    };
    let pop = popularity(ctx, defense)?;
    let inputs = ExperimentInputs {
        checkins: &ds,
        social: &social,
        meta: meta.as_ref(),
        popularity: pop.as_ref(),
    };
    let outcome = run_one(&inputs, &cfg)?;
    if let Some(emb) = &outcome.embedding {
        emb.write_dump(&ctx.out("embedding.txt"))?;
    }
    write_scores_csv(&ctx.out("scores.csv"), &outcome.pairs, &outcome.scores, None)?;
    write_report_csv(&ctx.out("report.csv"), &[outcome.row.clone()])?;
    outcome.roc.write_csv(&ctx.out("roc.csv"))?;
    let mut line = format!("n_pairs={} auc={}", outcome.row.n_pairs, outcome.row.auc);
    if let Some(u) = outcome.utility {
        line += &format!(" utility={u}");
    }
    if let Some(r) = outcome.recovery_rate {
        line += &format!(" recovery_rate={r}");
    }
    println!("{line}");
    ctx.write_meta("run", json!(outcome.seeds), json!({ "input": source, "experiment": cfg }))
}
