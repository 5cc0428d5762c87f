use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fscap::data::{
    generate_synthetic, ingest_tsv, load_dataset, save_dataset, Constraint, DataError, Dataset,
    EpisodeSampler, IngestOptions, SyntheticSpec,
};
use fscap::eval::{
    export_encodings, load_screen_contexts, load_screen_labels, logistic_probe, pearson_episodes,
    run_pearson, run_screen, EvalError, ProbeInstance, ProbeOptions, ScreenAssay, Scorer,
    TanimotoScorer,
};
use fscap::fingerprint::{morgan_fingerprint, Fingerprint, DEFAULT_NBITS, DEFAULT_RADIUS};
use fscap::model::{load_model, save_model, train_epoch, Episode, FsCapModel, ModelError, Trainer, Variant};
use fscap::nn::LrSchedule;
use fscap::parse_smiles;
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::{CliError, EvalArgs, IngestArgs, PredictArgs, ProbeArgs, SynthesizeArgs, TrainArgs};

fn input(e: impl Display) -> CliError {
    CliError::Input(e.to_string())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check_nbits(nbits: usize) -> Result<(), CliError> {
    Fingerprint::new(nbits).map(|_| ()).map_err(input)
}

fn load_f32_model(path: &Path) -> Result<(FsCapModel<f32>, BTreeMap<String, serde_json::Value>), CliError> {
    load_model::<f32>(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn open_dataset(path: &Path) -> Result<Dataset, CliError> {
    load_dataset(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse_constraint(s: &str) -> Result<Constraint, CliError> {
    s.parse().map_err(CliError::Input)
}

pub fn ingest(a: IngestArgs) -> Result<(), CliError> {
    check_nbits(a.nbits)?;
    let options = IngestOptions {
        nbits: a.nbits,
        radius: a.radius,
    };
    let ds = ingest_tsv(&a.input, &options).map_err(|e| match e {
        DataError::Io(io) => CliError::Input(format!("{}: {io}", a.input.display())),
        other => input(other),
    })?;
    let report = ds.provenance().to_tsv();
    match &a.report {
        Some(p) => write_file(p, &report)?,
        None => eprint!("{report}"),
    }
    if ds.is_empty() {
        return Err(CliError::Empty("no assays survived filters".into()));
    }
    save_dataset(&ds, &a.output).map_err(input)
}

pub fn synthesize(a: SynthesizeArgs) -> Result<(), CliError> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<SyntheticSpec>(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => SyntheticSpec::default(),
    };
    macro_rules! apply {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { spec.$field = v; } )* };
    }
    apply!(n_assays, molecules_per_assay, weight_sparsity, noise_sd, n_families, seed, nbits, radius);
    if let Some(n) = a.library_size {
        spec.library_size = (n > 0).then_some(n);
    }
    let (ds, truth) = generate_synthetic(&spec).map_err(input)?;
    save_dataset(&ds, &a.output).map_err(input)?;
    if let Some(p) = &a.truth {
        let doc: BTreeMap<&str, serde_json::Value> = truth
            .assays
            .iter()
            .map(|(id, t)| {
                let weights: BTreeMap<String, f64> = t
                    .weights
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| **w != 0.0)
                    .map(|(i, w)| (i.to_string(), *w))
                    .collect();
                let v = serde_json::json!({
                    "family": t.family,
                    "scale": t.scale,
                    "offset": t.offset,
                    "weights": weights,
                });
                (id.as_str(), v)
            })
            .collect();
        write_file(p, &(serde_json::to_string(&doc).map_err(input)? + "\n"))?;
    }
    Ok(())
}

fn effective_config(a: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &a.variant {
        cfg.variant = v.parse::<Variant>().map_err(input)?;
    }
    if let Some(c) = &a.constraint {
        cfg.constraint = parse_constraint(c)?;
    }
    macro_rules! apply {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { cfg.$field = v; } )* };
    }
    apply!(n_context, seed, total_episodes, batch_size, base_lr, warmup_steps, n_test_assays);
    if let Some(p) = &a.dataset {
        cfg.dataset = Some(p.display().to_string());
    }
    if let Some(p) = &a.out {
        cfg.out = Some(p.display().to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let cfg = effective_config(&a)?;
    if let Some(p) = &a.dump_config {
        write_file(p, &cfg.to_json())?;
    }
    let dataset_path = cfg
        .dataset
        .clone()
        .ok_or_else(|| CliError::Input("no dataset given (--dataset or config key \"dataset\")".into()))?;
    let out = PathBuf::from(
        cfg.out
            .clone()
            .ok_or_else(|| CliError::Input("no output path given (--out or config key \"out\")".into()))?,
    );
    let ds = open_dataset(Path::new(&dataset_path))?;
    if ds.nbits() != cfg.nbits || ds.radius() != cfg.radius {
        return Err(CliError::Input(format!(
            "dataset fingerprints are {} bits at radius {}, config asks for {} bits at radius {}",
            ds.nbits(),
            ds.radius(),
            cfg.nbits,
            cfg.radius
        )));
    }
    let (train_set, test_set) = ds.split_assays(cfg.n_test_assays, cfg.seed).map_err(input)?;
    let mut sampler = EpisodeSampler::new(&train_set, cfg.n_context, cfg.constraint, cfg.batch_size)
        .map_err(|e| match e {
            DataError::NoAssays => CliError::Empty(format!(
                "no training assay has enough contexts for n_context {} under constraint {}",
                cfg.n_context,
                cfg.constraint.name()
            )),
            other => input(other),
        })?;

    let mut log = String::new();
    for id in sampler.skipped() {
        let _ = writeln!(
            log,
            "# warning: skipped assay {id}: too few eligible contexts for n_context {} under constraint {}",
            cfg.n_context,
            cfg.constraint.name()
        );
    }
    log.push_str("epoch\tstep\tmean_loss\tlr\n");

    let mut model = FsCapModel::<f32>::new(cfg.model_config(), cfg.seed).map_err(input)?;
    let total_steps = cfg.total_steps();
    let schedule = LrSchedule::new(cfg.base_lr, cfg.warmup_steps, total_steps).map_err(input)?;
    let mut trainer = Trainer::new(schedule);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut epoch = 0;
    while trainer.step() < total_steps {
        let steps = cfg.steps_per_epoch.min(total_steps - trainer.step());
        let stats = train_epoch(&mut model, &mut trainer, &mut sampler, steps, &mut rng).map_err(|e| match e {
            ModelError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => input(other),
        })?;
        epoch += 1;
        let _ = writeln!(log, "{epoch}\t{}\t{:.6}\t{:.6e}", trainer.step(), stats.mean_loss, stats.last_lr);
        log::info!("epoch {epoch}: loss {:.4}", stats.mean_loss);
    }

    let mut run = cfg.clone();
    run.dataset = None;
    run.out = None;
    let mut metadata = BTreeMap::new();
    metadata.insert(
        "heldout_assays".to_string(),
        serde_json::json!(test_set.assay_ids().collect::<Vec<_>>()),
    );
    metadata.insert("run_config".to_string(), serde_json::to_value(&run).map_err(input)?);
    metadata.insert("constraint".to_string(), serde_json::json!(cfg.constraint.name()));
    save_model(&model, metadata, &out).map_err(input)?;
    let log_path = a.log.clone().unwrap_or_else(|| PathBuf::from(format!("{}.log.tsv", out.display())));
    write_file(&log_path, &log)
}

fn heldout(metadata: &BTreeMap<String, serde_json::Value>) -> Option<Vec<String>> {
    let ids: Vec<String> = metadata
        .get("heldout_assays")?
        .as_array()?
        .iter()
        .filter_map(|v| v.as_str().map(str::to_string))
        .collect();
    (!ids.is_empty()).then_some(ids)
}

fn eval_error(e: EvalError) -> CliError {
    match e {
        EvalError::NoValidGroups { .. } => CliError::Empty(e.to_string()),
        EvalError::NonFinite => CliError::Numeric(e.to_string()),
        other => input(other),
    }
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let loaded = match (&a.model, a.baseline.as_deref()) {
        (Some(_), Some(_)) => return Err(CliError::Input("give either --model or --baseline, not both".into())),
        (None, None) => return Err(CliError::Input("give --model or --baseline tanimoto".into())),
        (None, Some("tanimoto")) => None,
        (None, Some(other)) => return Err(CliError::Input(format!("unknown baseline {other:?}"))),
        (Some(p), None) => Some(load_f32_model(p)?),
    };
    let (scorer, n_context, nbits, radius, metadata): (&dyn Scorer, usize, usize, usize, _) = match &loaded {
        Some((m, meta)) => {
            if a.n_context.is_some_and(|n| n != m.config().n_context) {
                return Err(CliError::Input(format!(
                    "model was built for {} contexts",
                    m.config().n_context
                )));
            }
            (m, m.config().n_context, m.config().nbits, m.config().radius, Some(meta))
        }
        None => (&TanimotoScorer, a.n_context.unwrap_or(8), DEFAULT_NBITS, DEFAULT_RADIUS, None),
    };
    let constraint = match (&a.constraint, metadata.and_then(|m| m.get("constraint")).and_then(|v| v.as_str())) {
        (Some(c), _) => parse_constraint(c)?,
        (None, Some(c)) => parse_constraint(c)?,
        (None, None) => Constraint::None,
    };

    let report = match a.protocol.as_str() {
        "pearson" => {
            let mut ds = open_dataset(&a.dataset)?;
            if loaded.is_some() && ds.nbits() != nbits {
                return Err(CliError::Input(format!(
                    "dataset fingerprints have {} bits, model expects {nbits}",
                    ds.nbits()
                )));
            }
            if !a.all_assays {
                if let Some(ids) = metadata.and_then(heldout) {
                    ds = ds.subset(ids.iter().map(String::as_str));
                    if ds.is_empty() {
                        return Err(CliError::Empty("none of the model's held-out assays are in the dataset".into()));
                    }
                }
            }
            let (queries, skipped) =
                pearson_episodes(&ds, n_context, constraint, a.episodes_per_query, a.seed).map_err(eval_error)?;
            if skipped > 0 {
                eprintln!("skipped {skipped} queries with too few eligible contexts");
            }
            if queries.is_empty() {
                return Err(CliError::Empty("no query could be given a context set".into()));
            }
            run_pearson(scorer, &queries).map_err(eval_error)?.to_tsv()
        }
        "screen" => {
            let contexts_path = a
                .contexts
                .as_ref()
                .ok_or_else(|| CliError::Input("screen protocol needs --contexts".into()))?;
            let labels = load_screen_labels(&a.dataset, nbits, radius).map_err(eval_error)?;
            let mut contexts = load_screen_contexts(contexts_path, nbits, radius).map_err(eval_error)?;
            let mut assays = Vec::new();
            for (id, compounds) in labels {
                match contexts.remove(&id) {
                    Some(c) => assays.push(ScreenAssay {
                        assay_id: id,
                        contexts: c,
                        compounds,
                    }),
                    None => log::warn!("assay {id:?} has no contexts; skipped"),
                }
            }
            if assays.is_empty() {
                return Err(CliError::Empty("no labelled assay has contexts".into()));
            }
            run_screen(scorer, &assays, n_context, &a.k, a.episodes_per_query, a.seed)
                .map_err(eval_error)?
                .to_tsv()
        }
        other => return Err(CliError::Input(format!("unknown protocol {other:?} (pearson or screen)"))),
    };
    emit(a.out.as_deref(), &report)
}

pub fn probe(a: ProbeArgs) -> Result<(), CliError> {
    let (model, _) = load_f32_model(&a.model)?;
    if !model.variant().has_context_encoder() {
        return Err(CliError::Input("no_context models have no context encoding to probe".into()));
    }
    let ds = open_dataset(&a.dataset)?;
    let n_context = a.n_context.unwrap_or(model.config().n_context);
    if a.classes < 2 || a.trials < 2 || n_context == 0 {
        return Err(CliError::Input("need at least 2 classes, 2 trials and 1 context".into()));
    }
    if a.classes > ds.n_assays() {
        return Err(CliError::Input(format!(
            "{} classes requested but the dataset has {} assays",
            a.classes,
            ds.n_assays()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut ids: Vec<&str> = ds.assay_ids().collect();
    ids.shuffle(&mut rng);
    ids.truncate(a.classes);
    ids.sort_unstable();

    // Compounds measured in every chosen assay, with each assay's activity.
    let lookup: Vec<BTreeMap<&str, (&Fingerprint, f64)>> = ids
        .iter()
        .map(|id| {
            ds.assay(id)
                .unwrap_or_default()
                .iter()
                .map(|c| (c.smiles.as_str(), (&c.fingerprint, c.activity)))
                .collect()
        })
        .collect();
    let shared: Vec<&str> = lookup[0]
        .keys()
        .copied()
        .filter(|s| lookup.iter().all(|l| l.contains_key(s)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if shared.len() < n_context {
        return Err(CliError::Input(format!(
            "only {} compounds are shared by all {} chosen assays, {n_context} needed",
            shared.len(),
            a.classes
        )));
    }

    let mut episodes = Vec::with_capacity(a.trials * a.classes);
    let mut instances = Vec::with_capacity(a.trials * a.classes);
    for _ in 0..a.trials {
        let picks: Vec<&str> = index::sample(&mut rng, shared.len(), n_context)
            .into_iter()
            .map(|i| shared[i])
            .collect();
        for (label, table) in lookup.iter().enumerate() {
            let contexts: Vec<(Fingerprint, f64)> = picks
                .iter()
                .map(|s| {
                    let (fp, act) = table[s];
                    (fp.clone(), act)
                })
                .collect();
            let encoding = model.encode_context_set(&contexts).map_err(input)?;
            instances.push(ProbeInstance { encoding, label });
            episodes.push(Episode {
                assay_id: ids[label].to_string(),
                query: contexts[0].0.clone(),
                contexts,
                target: f64::NAN,
            });
        }
    }
    if a.shuffle_labels {
        let mut labels: Vec<usize> = instances.iter().map(|i| i.label).collect();
        labels.shuffle(&mut rng);
        for (inst, l) in instances.iter_mut().zip(labels) {
            inst.label = l;
        }
    }
    if let Some(p) = &a.export {
        export_encodings(&model, &episodes, p).map_err(input)?;
    }
    let r = logistic_probe(&instances, &ProbeOptions::default(), a.seed).map_err(eval_error)?;
    let report = format!(
        "classes\ttrials\tn_context\tn_train\tn_test\ttrain_accuracy\ttest_accuracy\n{}\t{}\t{n_context}\t{}\t{}\t{:.6}\t{:.6}\n",
        a.classes, a.trials, r.n_train, r.n_test, r.train_accuracy, r.test_accuracy
    );
    emit(a.out.as_deref(), &report)
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn fingerprint(smiles: &str, nbits: usize, radius: usize) -> Option<Fingerprint> {
    let mol = parse_smiles(smiles).ok()?;
    morgan_fingerprint(&mol, radius, nbits).ok()
}

pub fn predict(a: PredictArgs) -> Result<(), CliError> {
    let (model, _) = load_f32_model(&a.model)?;
    let (nbits, radius, n_context) = (model.config().nbits, model.config().radius, model.config().n_context);

    let text = read_text(&a.contexts)?;
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r')).filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().unwrap_or("").split('\t').map(str::trim).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|c| *c == name)
            .ok_or_else(|| CliError::Input(format!("contexts file is missing column {name:?}")))
    };
    let (c_smiles, c_act) = (col("smiles")?, col("activity_log10_nm")?);
    let mut contexts = Vec::new();
    for l in lines {
        let f: Vec<&str> = l.split('\t').map(str::trim).collect();
        let smiles = f.get(c_smiles).copied().unwrap_or("");
        let activity: f64 = f
            .get(c_act)
            .and_then(|v| v.parse().ok())
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| CliError::Input(format!("context {smiles:?}: bad activity")))?;
        match fingerprint(smiles, nbits, radius) {
            Some(fp) => contexts.push((fp, activity)),
            None => eprintln!("skipping unparseable context SMILES {smiles:?}"),
        }
    }
    if contexts.len() != n_context {
        return Err(CliError::Input(format!(
            "{} usable contexts, model expects exactly {n_context}",
            contexts.len()
        )));
    }
    // A canonical order makes the output independent of the file's row order.
    contexts.sort_by(|x, y| {
        x.0.to_le_bytes()
            .cmp(&y.0.to_le_bytes())
            .then(x.1.total_cmp(&y.1))
    });

    let mut queries = Vec::new();
    let mut episodes = Vec::new();
    for l in read_text(&a.queries)?.lines() {
        let smiles = l.trim();
        if smiles.is_empty() {
            continue;
        }
        match fingerprint(smiles, nbits, radius) {
            Some(fp) => {
                queries.push(smiles.to_string());
                episodes.push(Episode {
                    assay_id: String::new(),
                    query: fp,
                    contexts: contexts.clone(),
                    target: f64::NAN,
                });
            }
            None => eprintln!("skipping unparseable query SMILES {smiles:?}"),
        }
    }
    let preds = model.predict(&episodes).map_err(input)?;
    let mut out = String::from("query\tpredicted_log10_nm\n");
    for (q, p) in queries.iter().zip(preds) {
        if !p.is_finite() {
            return Err(CliError::Numeric(format!("non-finite prediction for {q:?}")));
        }
        let _ = writeln!(out, "{q}\t{p:.6}");
    }
    write_file(&a.out, &out)
}
