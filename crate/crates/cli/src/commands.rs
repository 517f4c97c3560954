//! Subcommand implementations. Each returns a library `Result`; exit-code
//! mapping happens in main.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use vgslab_core::dsp::{mfcc, read_features, read_wav, write_features, MfccConfig};
use vgslab_core::encoders::{
    embed_image, embed_speech, load_checkpoint, save_checkpoint, Checkpoint, EmbeddingVector,
    EncoderConfig,
};
use vgslab_core::error::{Error, Result};
use vgslab_core::gating::{
    gating_heatmap, load_tokens, pad_features, run_gating, run_word_recognition, WordToken,
};
use vgslab_core::ingest::{
    assemble_gating_table, assemble_word_table, generate_toy, read_vector, Manifest, PhoneClasses,
    ToySpec,
};
use vgslab_core::lexicon::Lexicon;
use vgslab_core::retrieval::{rank_items, EmbeddingStore, RelevanceMap};
use vgslab_core::stats::{build_design, fit_lmm, wald_report, AnalysisTable, FitOptions, ModelSpec};
use vgslab_core::training::{train, TrainConfig, TrainPair};

use crate::config::ConfigFile;

fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// toy

#[allow(clippy::too_many_arguments)]
pub fn cmd_toy(
    out_dir: &Path,
    classes: Option<usize>,
    tokens: Option<usize>,
    image_dim: Option<usize>,
    seed: Option<u64>,
    feature_noise: Option<f64>,
    image_noise: Option<f64>,
    speakers: Option<usize>,
    corrupt_every: Option<usize>,
    config_path: Option<&Path>,
) -> Result<()> {
    let cfg = ConfigFile::load(config_path)?;
    cfg.check_keys(&[
        "classes",
        "tokens",
        "image-dim",
        "seed",
        "feature-noise",
        "image-noise",
        "speakers",
        "corrupt-every",
        "corrupt-scale",
    ])?;
    let defaults = ToySpec::default();
    let spec = ToySpec {
        n_classes: cfg.resolve("classes", classes, defaults.n_classes)?,
        tokens_per_class: cfg.resolve("tokens", tokens, defaults.tokens_per_class)?,
        image_dim: cfg.resolve("image-dim", image_dim, defaults.image_dim)?,
        seed: cfg.resolve("seed", seed, defaults.seed)?,
        feature_noise: cfg.resolve("feature-noise", feature_noise, defaults.feature_noise)?,
        image_noise: cfg.resolve("image-noise", image_noise, defaults.image_noise)?,
        n_speakers: cfg.resolve("speakers", speakers, defaults.n_speakers)?,
        corrupt_every: cfg.resolve("corrupt-every", corrupt_every, defaults.corrupt_every)?,
        corrupt_scale: cfg.resolve("corrupt-scale", None, defaults.corrupt_scale)?,
        ..defaults
    };
    std::fs::create_dir_all(out_dir)?;
    let out = generate_toy(&spec, out_dir)?;

    // Default model specs for the two regressions ride along with the data.
    // n_phonemes equals n_vowels + n_consonants exactly, so the word-level
    // model keeps the two class counts and drops the redundant total.
    let exp1 = ModelSpec {
        response: "p_at_10".into(),
        fixed: vec![
            "signal_duration".into(),
            "speaking_rate".into(),
            "train_frequency".into(),
            "n_vowels".into(),
            "n_consonants".into(),
            "train_frequency:n_vowels".into(),
            "train_frequency:n_consonants".into(),
        ],
        random: vec![
            vgslab_core::stats::RandomTerm {
                group: "speaker_id".into(),
                kind: "intercept".into(),
                covariate: None,
            },
            vgslab_core::stats::RandomTerm {
                group: "word_id".into(),
                kind: "intercept".into(),
                covariate: None,
            },
            vgslab_core::stats::RandomTerm {
                group: "speaker_id".into(),
                kind: "slope".into(),
                covariate: Some("signal_duration".into()),
            },
        ],
    };
    exp1.save(&out_dir.join("exp1.model.json"))?;
    let exp2 = ModelSpec {
        response: "p_at_10".into(),
        fixed: vec![
            "n_phonemes".into(),
            "train_frequency".into(),
            "cohort_size".into(),
            "neighborhood_density".into(),
        ],
        random: vec![
            vgslab_core::stats::RandomTerm {
                group: "speaker_id".into(),
                kind: "intercept".into(),
                covariate: None,
            },
            vgslab_core::stats::RandomTerm {
                group: "word_id".into(),
                kind: "intercept".into(),
                covariate: None,
            },
        ],
    };
    exp2.save(&out_dir.join("exp2.model.json"))?;

    println!(
        "toy dataset: {} captions, {} images, {} words -> {}",
        out.n_captions,
        out.n_images,
        out.words.len(),
        out_dir.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// features

#[allow(clippy::too_many_arguments)]
pub fn cmd_features(
    manifest_path: Option<&Path>,
    out_manifest: Option<&Path>,
    features_dir: Option<&Path>,
    wav: Option<&Path>,
    out: Option<&Path>,
    csv: Option<&Path>,
    config_path: Option<&Path>,
) -> Result<()> {
    let cfg = ConfigFile::load(config_path)?;
    cfg.check_keys(&["window-ms", "shift-ms", "filters", "pre-emphasis"])?;
    let mfcc_config = MfccConfig {
        window_s: cfg.resolve("window-ms", None::<f64>, 25.0)? / 1000.0,
        shift_s: cfg.resolve("shift-ms", None::<f64>, 10.0)? / 1000.0,
        n_filters: cfg.resolve("filters", None::<usize>, 26)?,
        pre_emphasis: cfg.resolve("pre-emphasis", None::<f64>, 0.97)?,
        ..MfccConfig::default()
    };

    match (manifest_path, wav) {
        (Some(manifest_path), None) => {
            let features_dir = features_dir
                .ok_or_else(|| Error::contract("features: --features-dir is required"))?;
            let out_manifest = out_manifest
                .ok_or_else(|| Error::contract("features: --out-manifest is required"))?;
            let mut manifest = Manifest::load(manifest_path)?;
            let base = Manifest::base_dir(manifest_path);
            std::fs::create_dir_all(features_dir)?;
            let mut converted = 0usize;
            for cap in &mut manifest.captions {
                let Some(audio) = cap.audio.clone() else {
                    continue;
                };
                let wave = read_wav(&base.join(&audio))?;
                let mut seq = mfcc(&wave, &mfcc_config)?;
                seq.source_id = cap.utterance_id.clone();
                let feat_path = features_dir.join(format!("{}.feat", cap.utterance_id));
                write_features(&feat_path, &seq)?;
                // Store the path relative to the output manifest when possible.
                let out_base = Manifest::base_dir(out_manifest);
                let rel = feat_path
                    .strip_prefix(&out_base)
                    .map(|p| p.to_path_buf())
                    .unwrap_or_else(|_| feat_path.clone());
                cap.features = Some(rel.to_string_lossy().into_owned());
                converted += 1;
            }
            manifest.save(out_manifest)?;
            println!("features: converted {converted} captions");
            Ok(())
        }
        (None, Some(wav)) => {
            let out = out.ok_or_else(|| Error::contract("features: --out is required"))?;
            let wave = read_wav(wav)?;
            let mut seq = mfcc(&wave, &mfcc_config)?;
            seq.source_id = wav
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            write_features(out, &seq)?;
            if let Some(csv_path) = csv {
                vgslab_core::dsp::write_features_csv(csv_path, &seq)?;
            }
            println!("features: {} frames x {} dims", seq.n_frames(), seq.dim());
            Ok(())
        }
        _ => Err(Error::contract(
            "features: pass exactly one of --manifest or --wav",
        )),
    }
}

// ---------------------------------------------------------------------------
// train

fn load_pairs(manifest: &Manifest, base: &Path, split: &str) -> Result<Vec<TrainPair>> {
    let mut pairs = Vec::new();
    let image_paths: BTreeMap<&str, &str> = manifest
        .images
        .iter()
        .map(|i| (i.image_id.as_str(), i.features.as_str()))
        .collect();
    for cap in manifest.captions_in_split(split) {
        let feat_rel = cap.features.as_ref().ok_or_else(|| {
            Error::ingest(format!(
                "caption '{}' has no extracted features (run the features step)",
                cap.utterance_id
            ))
        })?;
        let features = read_features(&base.join(feat_rel))?;
        let img_rel = image_paths[cap.image_id.as_str()];
        let image = read_vector(&base.join(img_rel))?;
        pairs.push(TrainPair {
            caption_id: cap.utterance_id.clone(),
            image_id: cap.image_id.clone(),
            features: features.frames,
            image,
        });
    }
    Ok(pairs)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train(
    manifest_path: &Path,
    out: &Path,
    profile: Option<String>,
    margin: Option<f64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    seed: Option<u64>,
    metrics: Option<&Path>,
    config_path: Option<&Path>,
) -> Result<()> {
    let cfg = ConfigFile::load(config_path)?;
    cfg.check_keys(&[
        "profile",
        "margin",
        "epochs",
        "batch-size",
        "lr",
        "seed",
    ])?;
    let defaults = TrainConfig::default();
    let profile = cfg.resolve_string("profile", profile, "desk");
    let train_config = TrainConfig {
        margin: cfg.resolve("margin", margin, defaults.margin)?,
        epochs: cfg.resolve("epochs", epochs, defaults.epochs)?,
        batch_size: cfg.resolve("batch-size", batch_size, defaults.batch_size)?,
        lr: cfg.resolve("lr", lr, defaults.lr)?,
        seed: cfg.resolve("seed", seed, defaults.seed)?,
    };

    let manifest = Manifest::load(manifest_path)?;
    let base = Manifest::base_dir(manifest_path);
    let train_pairs = load_pairs(&manifest, &base, "train")?;
    let val_pairs = load_pairs(&manifest, &base, "val")?;
    if train_pairs.is_empty() {
        return Err(Error::ingest("manifest has no training captions"));
    }

    let mut encoder_config = EncoderConfig::from_profile(&profile)?;
    // The image head must match the data.
    encoder_config.image_feature_dim = train_pairs[0].image.len();
    let feat_dim = train_pairs[0].features.first().map_or(0, |f| f.len());
    if feat_dim != encoder_config.feature_dim {
        return Err(Error::ingest(format!(
            "feature dim {} does not match the {} profile's {}",
            feat_dim, profile, encoder_config.feature_dim
        )));
    }

    let outcome = train(&train_pairs, &val_pairs, &encoder_config, &train_config)?;
    save_checkpoint(out, &outcome.checkpoint)?;
    if let Some(metrics_path) = metrics {
        vgslab_core::training::write_metrics_csv(
            metrics_path,
            &format!(
                "vgslab train seed={} profile={} margin={} epochs={} batch_size={} lr={}",
                train_config.seed,
                profile,
                train_config.margin,
                train_config.epochs,
                train_config.batch_size,
                train_config.lr
            ),
            &outcome.log,
        )?;
    }
    let last = outcome.log.last().expect("at least one epoch");
    println!(
        "train: best epoch {} (validation R@1 {:.1}); final loss {:.4} -> {}",
        outcome.best_epoch,
        outcome
            .log
            .iter()
            .map(|m| m.recall_at_1)
            .fold(f64::NEG_INFINITY, f64::max),
        last.loss,
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// embed

pub fn cmd_embed(
    ckpt_path: &Path,
    manifest_path: &Path,
    what: &str,
    split: &str,
    out: &Path,
) -> Result<()> {
    if !matches!(split, "train" | "val" | "test" | "all") {
        return Err(Error::contract(format!(
            "embed: unknown split '{split}' (train|val|test|all)"
        )));
    }
    let ckpt = load_checkpoint(ckpt_path)?;
    let manifest = Manifest::load(manifest_path)?;
    let base = Manifest::base_dir(manifest_path);

    let provenance_meta = manifest.image_caption_words();
    let entries: Vec<(String, EmbeddingVector)> = match what {
        "images" => manifest
            .images_in_split(split)
            .into_iter()
            .map(|img| {
                let vec = read_vector(&base.join(&img.features))?;
                Ok((img.image_id.clone(), embed_image(&vec, &ckpt.params)?))
            })
            .collect::<Result<_>>()?,
        "captions" => manifest
            .captions_in_split(split)
            .into_iter()
            .map(|cap| {
                let feat_rel = cap.features.as_ref().ok_or_else(|| {
                    Error::ingest(format!("caption '{}' has no features", cap.utterance_id))
                })?;
                let seq = read_features(&base.join(feat_rel))?;
                let padded = pad_features(&seq, ckpt.config.min_frames());
                Ok((
                    cap.utterance_id.clone(),
                    embed_speech(&padded.frames, &ckpt.params, &ckpt.config)?,
                ))
            })
            .collect::<Result<_>>()?,
        other => {
            return Err(Error::contract(format!(
                "embed: --what must be images or captions, got '{other}'"
            )))
        }
    };

    let metadata = if what == "images" {
        entries
            .iter()
            .filter_map(|(id, _)| provenance_meta.get(id).map(|w| (id.clone(), w.clone())))
            .collect()
    } else {
        BTreeMap::new()
    };
    let store = EmbeddingStore::new(entries, metadata)?;
    store.save(out)?;
    println!(
        "embed: {} {} embeddings of dim {} -> {}",
        store.len(),
        what,
        store.dim(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// retrieve

pub fn cmd_retrieve(
    store_path: &Path,
    query_path: &Path,
    k: usize,
    out: &Path,
    relevance_path: Option<&Path>,
    report: Option<&Path>,
) -> Result<()> {
    let store = EmbeddingStore::load(store_path)?;
    let queries = EmbeddingStore::load(query_path)?;

    let mut rankings = String::from("query_id,rank,item_id,similarity\n");
    let mut query_embeddings = Vec::new();
    for (i, id) in queries.ids().iter().enumerate() {
        let emb = queries.embedding(i);
        let top = rank_items(&emb, &store, k)?;
        for (rank, (item, sim)) in top.iter().enumerate() {
            rankings.push_str(&format!("{id},{},{item},{sim}\n", rank + 1));
        }
        query_embeddings.push((id.clone(), emb));
    }
    let header = format!("# vgslab retrieve k={k}\n");
    write_text(out, &(header.clone() + &rankings))?;

    if let Some(relevance_path) = relevance_path {
        let report = report.ok_or_else(|| {
            Error::contract("retrieve: --report is required when --relevance is given")
        })?;
        let relevance = RelevanceMap::load(relevance_path)?;
        relevance.validate_against(&store)?;
        let mut out_text = header + "query_id,p_at_10\n";
        for (id, emb) in &query_embeddings {
            let p = vgslab_core::retrieval::precision_at_10(emb, &store, &relevance, id)?;
            out_text.push_str(&format!("{id},{p}\n"));
        }
        write_text(report, &out_text)?;
    }
    println!("retrieve: ranked {} queries against {} items", queries.len(), store.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// words / gate

fn load_word_experiment(
    ckpt_path: &Path,
    tokens_path: &Path,
    features_dir: &Path,
    store_path: &Path,
    relevance_path: Option<&Path>,
) -> Result<(Checkpoint, Vec<WordToken>, EmbeddingStore, RelevanceMap)> {
    let ckpt = load_checkpoint(ckpt_path)?;
    let tokens = load_tokens(tokens_path, features_dir)?;
    let store = EmbeddingStore::load(store_path)?;
    let relevance = match relevance_path {
        Some(p) => RelevanceMap::load(p)?,
        None => {
            let words: Vec<String> = tokens
                .iter()
                .map(|t| t.word.clone())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            RelevanceMap::from_store_metadata(&store, &words)
        }
    };
    relevance.validate_against(&store)?;
    Ok((ckpt, tokens, store, relevance))
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_words(
    ckpt_path: &Path,
    tokens_path: &Path,
    features_dir: &Path,
    store_path: &Path,
    relevance_path: Option<&Path>,
    out: &Path,
    summary_path: Option<&Path>,
    histogram_path: Option<&Path>,
) -> Result<()> {
    let (ckpt, tokens, store, relevance) =
        load_word_experiment(ckpt_path, tokens_path, features_dir, store_path, relevance_path)?;
    let results = run_word_recognition(&ckpt.params, &ckpt.config, &tokens, &store, &relevance)?;
    let provenance = format!(
        "vgslab words ckpt_seed={} ckpt_epoch={} tokens={}",
        ckpt.seed,
        ckpt.epoch,
        tokens.len()
    );
    vgslab_core::gating::io::write_word_results_csv(out, &provenance, &results)?;

    let summary = vgslab_core::gating::io::word_summary(&results);
    if let Some(path) = summary_path {
        vgslab_core::gating::io::write_word_summary_csv(path, &provenance, &summary)?;
    }
    if let Some(path) = histogram_path {
        let means: Vec<f64> = summary.iter().map(|(_, _, mean, _)| *mean).collect();
        vgslab_core::gating::io::write_histogram_csv(path, &provenance, &means)?;
    }
    let overall: f64 =
        results.iter().map(|r| r.p_at_10).sum::<f64>() / results.len() as f64;
    println!(
        "words: {} tokens over {} words; mean P@10 {:.3}",
        results.len(),
        summary.len(),
        overall
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_gate(
    ckpt_path: &Path,
    tokens_path: &Path,
    features_dir: &Path,
    store_path: &Path,
    relevance_path: Option<&Path>,
    out: &Path,
    heatmap_path: Option<&Path>,
) -> Result<()> {
    let (ckpt, tokens, store, relevance) =
        load_word_experiment(ckpt_path, tokens_path, features_dir, store_path, relevance_path)?;
    let results = run_gating(&ckpt.params, &ckpt.config, &tokens, &store, &relevance)?;
    let provenance = format!(
        "vgslab gate ckpt_seed={} ckpt_epoch={} tokens={}",
        ckpt.seed,
        ckpt.epoch,
        tokens.len()
    );
    vgslab_core::gating::io::write_gating_results_csv(out, &provenance, &results)?;
    if let Some(path) = heatmap_path {
        vgslab_core::gating::io::write_heatmap_csv(path, &provenance, &gating_heatmap(&results))?;
    }
    println!(
        "gate: {} prefix embeddings over {} tokens",
        results.len(),
        tokens.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// stats-table

#[allow(clippy::too_many_arguments)]
pub fn cmd_stats_table(
    experiment: u32,
    results_path: &Path,
    tokens_path: &Path,
    features_dir: &Path,
    lexicon_path: &Path,
    phone_classes: Option<&Path>,
    cohort_excludes_target: bool,
    out: &Path,
) -> Result<()> {
    let tokens = load_tokens(tokens_path, features_dir)?;
    let lexicon = Lexicon::load(lexicon_path)?;
    let classes = match phone_classes {
        Some(p) => PhoneClasses::load(p)?,
        None => PhoneClasses::arpabet(),
    };
    let table: AnalysisTable = match experiment {
        1 => {
            let results = vgslab_core::gating::io::read_word_results_csv(results_path)?;
            assemble_word_table(&results, &tokens, &lexicon, &classes, cohort_excludes_target)?
        }
        2 => {
            let results = vgslab_core::gating::io::read_gating_results_csv(results_path)?;
            assemble_gating_table(&results, &tokens, &lexicon, &classes, cohort_excludes_target)?
        }
        other => {
            return Err(Error::contract(format!(
                "stats-table: experiment must be 1 or 2, got {other}"
            )))
        }
    };
    table.save(
        out,
        &[format!(
            "vgslab stats-table experiment={experiment} rows={}",
            table.n_rows()
        )],
    )?;
    println!("stats-table: {} rows -> {}", table.n_rows(), out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// regress

pub fn cmd_regress(
    table_path: &Path,
    spec_path: &Path,
    out: &Path,
    report_path: Option<&Path>,
) -> Result<()> {
    let table = AnalysisTable::load(table_path)?;
    let spec = ModelSpec::load(spec_path)?;
    let design = build_design(&table, &spec)?;
    let fit = fit_lmm(&design, &FitOptions::default())?;
    let rows = wald_report(&fit)?;
    // Provenance uses file names, not paths, so identical runs in
    // different directories stay byte-identical.
    let file_name = |p: &Path| {
        p.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let provenance = format!(
        "vgslab regress table={} spec={} n={} iterations={}",
        file_name(table_path),
        file_name(spec_path),
        design.n(),
        fit.iterations
    );
    vgslab_core::stats::write_fit_csv(out, &provenance, &fit, &rows)?;
    let text = vgslab_core::stats::fit_text_report(&provenance, &fit, &rows);
    if let Some(report_path) = report_path {
        write_text(report_path, &text)?;
    }
    let n_sig = rows.iter().filter(|r| r.significant).count();
    println!(
        "regress: {} fixed effects ({} significant), {} EM iterations",
        rows.len(),
        n_sig,
        fit.iterations
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// report

pub struct ReportInputs {
    pub train_metrics: Option<PathBuf>,
    pub words_summary: Option<PathBuf>,
    pub histogram: Option<PathBuf>,
    pub heatmap: Option<PathBuf>,
    pub fit1: Option<PathBuf>,
    pub fit2: Option<PathBuf>,
}

pub fn cmd_report(inputs: &ReportInputs, out: &Path) -> Result<()> {
    let mut doc = String::from("vgslab pipeline report\n======================\n\n");

    let section = |title: &str, path: &Option<PathBuf>, doc: &mut String| -> Result<()> {
        doc.push_str(&format!("{title}\n{}\n", "-".repeat(title.len())));
        match path {
            None => doc.push_str("not run\n\n"),
            Some(p) if !p.is_file() => {
                return Err(Error::ingest(format!("report: {} does not exist", p.display())))
            }
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                doc.push_str(text.trim_end());
                doc.push_str("\n\n");
            }
        }
        Ok(())
    };

    section("training metrics", &inputs.train_metrics, &mut doc)?;
    section(
        "experiment 1: word recognition (per-word P@10)",
        &inputs.words_summary,
        &mut doc,
    )?;
    section("experiment 1: P@10 histogram", &inputs.histogram, &mut doc)?;
    section("experiment 2: gating heatmap", &inputs.heatmap, &mut doc)?;
    section("experiment 1: mixed-effects fit", &inputs.fit1, &mut doc)?;
    section("experiment 2: mixed-effects fit", &inputs.fit2, &mut doc)?;

    write_text(out, &doc)?;
    println!("report -> {}", out.display());
    Ok(())
}
