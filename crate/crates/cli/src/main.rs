mod config;

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use emochat::corpus::{
    analyze_eip, encode_corpus, encode_text, generate_synthetic_corpus, init_embedding_table, load_embeddings, read_corpus, tokenize, write_corpus,
    ConversationPair, DialogueRecord, EmbeddingKind, SyntheticSpec, Vocabulary,
};
use emochat::evaluation::{fleiss_kappa, matched_pca_distance, metric_report, pca_project, read_human_scores, summarize_human_scores};
use emochat::training::{
    emotion_samples, pretrain_seq2seq, read_checkpoint, save_checkpoint, selector_accuracy, train, warm_start, CheckpointKind, CheckpointMeta,
    MetricsLog, RngState, StepRecord, TrainObserver,
};
use emochat::{EmotionCategory, Model, NUM_EMOTIONS};
use serde_json::{json, Value};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "emochat", version, about = "Emotion-aware dialogue model: data, training, evaluation and chat")]
struct Cli {
    /// INI file with run settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// tiny, desk or paper.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra setting as key=value; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct DataArgs {
    /// Corpus in JSON-lines format.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus with a planted emotion transition pattern.
    GenSynthetic {
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        /// Six target indices (one per post emotion) or 36 row-major probabilities.
        #[arg(long)]
        transition: Option<String>,
    },
    /// Train the plain seq2seq route on NLL and save its tensors.
    Pretrain {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train the full model, optionally warm-started from a pretrained checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Compute metrics for hypothesis/reference files or a checkpoint on a corpus.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        hypotheses: Option<PathBuf>,
        #[arg(long)]
        references: Option<PathBuf>,
        /// CSV with columns id, semantic, emotion.
        #[arg(long)]
        human: Option<PathBuf>,
        /// CSV of per-item rater counts, one column per category.
        #[arg(long)]
        ratings: Option<PathBuf>,
    },
    /// Count post-to-response emotion transitions.
    AnalyzeEip {
        #[command(flatten)]
        data: DataArgs,
        /// primary or dual.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Project prior and recognition emotion predictions onto two principal axes.
    ProjectEmotions {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Read posts from stdin and print the predicted emotion and the response.
    Chat,
}

/// Failure with its exit code: 1 for bad input, 2 for runtime failures.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<emochat::Error> for Failure {
    fn from(e: emochat::Error) -> Self {
        Failure {
            code: if e.is_validation() { 1 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 2,
            message: e.to_string(),
        }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn set(cfg: &mut RunConfig, key: &str, value: Option<String>) -> CmdResult {
    if let Some(v) = value {
        cfg.set(key, &v).map_err(Failure::invalid)?;
    }
    Ok(())
}

fn path_str(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn resolve(cli: &Cli) -> CmdResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path).map_err(Failure::invalid)?;
    }
    set(&mut cfg, "seed", cli.seed.map(|s| s.to_string()))?;
    set(&mut cfg, "preset", cli.preset.clone())?;
    set(&mut cfg, "checkpoint", path_str(cli.checkpoint.clone()))?;
    set(&mut cfg, "out", path_str(cli.out.clone()))?;
    for kv in &cli.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::invalid(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v).map_err(Failure::invalid)?;
    }
    match &cli.command {
        Command::GenSynthetic { pairs, noise, transition } => {
            set(&mut cfg, "pairs", pairs.map(|v| v.to_string()))?;
            set(&mut cfg, "noise_rate", noise.map(|v| v.to_string()))?;
            set(&mut cfg, "transition", transition.clone())?;
        }
        Command::Pretrain { data, steps } => {
            set(&mut cfg, "corpus", path_str(data.corpus.clone()))?;
            set(&mut cfg, "pretrain_steps", steps.map(|v| v.to_string()))?;
        }
        Command::Train {
            data,
            validation,
            steps,
            alpha,
        } => {
            set(&mut cfg, "corpus", path_str(data.corpus.clone()))?;
            set(&mut cfg, "validation", path_str(validation.clone()))?;
            set(&mut cfg, "max_steps", steps.map(|v| v.to_string()))?;
            set(&mut cfg, "alpha", alpha.map(|v| v.to_string()))?;
        }
        Command::Eval {
            data,
            hypotheses,
            references,
            human,
            ratings,
        } => {
            set(&mut cfg, "corpus", path_str(data.corpus.clone()))?;
            set(&mut cfg, "hypotheses", path_str(hypotheses.clone()))?;
            set(&mut cfg, "references", path_str(references.clone()))?;
            set(&mut cfg, "human_scores", path_str(human.clone()))?;
            set(&mut cfg, "ratings", path_str(ratings.clone()))?;
        }
        Command::AnalyzeEip { data, mode } => {
            set(&mut cfg, "corpus", path_str(data.corpus.clone()))?;
            set(&mut cfg, "eip_mode", mode.clone())?;
        }
        Command::ProjectEmotions { data, samples } => {
            set(&mut cfg, "corpus", path_str(data.corpus.clone()))?;
            set(&mut cfg, "samples", samples.map(|v| v.to_string()))?;
        }
        Command::Chat => {}
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CmdResult {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::GenSynthetic { .. } => cmd_gen_synthetic(&cfg),
        Command::Pretrain { .. } => cmd_pretrain(&cfg),
        Command::Train { .. } => cmd_train(&cfg),
        Command::Eval { .. } => cmd_eval(&cfg),
        Command::AnalyzeEip { .. } => cmd_analyze_eip(&cfg),
        Command::ProjectEmotions { .. } => cmd_project_emotions(&cfg),
        Command::Chat => cmd_chat(&cfg),
    }
}

fn prepare_out(cfg: &RunConfig) -> CmdResult<PathBuf> {
    fs::create_dir_all(&cfg.out).map_err(|e| Failure {
        code: 2,
        message: format!("cannot create {}: {e}", cfg.out.display()),
    })?;
    write_json(&cfg.out.join("effective_config.json"), &cfg.to_json())?;
    Ok(cfg.out.clone())
}

fn write_json(path: &Path, value: &Value) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(|e| Failure {
        code: 2,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> CmdResult<&'a PathBuf> {
    let p = p.as_ref().ok_or_else(|| Failure::invalid(format!("missing {what}")))?;
    if !p.exists() {
        return Err(Failure::invalid(format!("{what} not found: {}", p.display())));
    }
    Ok(p)
}

fn parse_transition(text: &str) -> CmdResult<Vec<Vec<f64>>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::invalid(format!("transition must be comma-separated numbers, got '{text}'")))?;
    let k = NUM_EMOTIONS;
    if values.len() == k {
        let mut rows = vec![vec![0.0; k]; k];
        for (i, &t) in values.iter().enumerate() {
            if t < 0.0 || t.fract() != 0.0 || t as usize >= k {
                return Err(Failure::invalid(format!("transition target {t} is not an emotion index")));
            }
            rows[i][t as usize] = 1.0;
        }
        Ok(rows)
    } else if values.len() == k * k {
        Ok(values.chunks(k).map(<[f64]>::to_vec).collect())
    } else {
        Err(Failure::invalid(format!(
            "transition needs {k} target indices or {} probabilities, got {}",
            k * k,
            values.len()
        )))
    }
}

fn cmd_gen_synthetic(cfg: &RunConfig) -> CmdResult {
    let spec = SyntheticSpec::with_transition(parse_transition(&cfg.transition)?, cfg.pairs, cfg.noise_rate);
    let records = generate_synthetic_corpus(&spec, cfg.seed)?;
    let out = prepare_out(cfg)?;
    write_corpus(out.join("corpus.jsonl"), &records)?;
    let spec_json = serde_json::to_value(&spec).map_err(|e| Failure {
        code: 2,
        message: e.to_string(),
    })?;
    write_json(&out.join("synthetic_spec.json"), &spec_json)?;
    println!("wrote {} pairs to {}", records.len(), out.join("corpus.jsonl").display());
    Ok(())
}

fn load_records(path: &Option<PathBuf>, what: &str) -> CmdResult<Vec<DialogueRecord>> {
    let p = require(path, what)?;
    let records = read_corpus(p)?;
    if records.is_empty() {
        return Err(Failure::invalid(format!("{what} {} is empty", p.display())));
    }
    Ok(records)
}

fn fresh_model(cfg: &RunConfig, vocab: &Vocabulary) -> CmdResult<Model> {
    let mc = cfg.model_config(vocab.len());
    let (v, d) = (vocab.len(), mc.embed_dim);
    let table = |path: &Option<PathBuf>, kind| -> CmdResult<_> {
        Ok(match path {
            Some(p) => load_embeddings(p, vocab, d, kind, cfg.seed)?,
            None => init_embedding_table(v, d, kind, cfg.seed),
        })
    };
    let semantic = table(&cfg.semantic_embeddings, EmbeddingKind::Semantic)?;
    let emotional = table(&cfg.emotional_embeddings, EmbeddingKind::Emotional)?;
    Ok(Model::with_embeddings(mc, cfg.seed, semantic, emotional)?)
}

fn encode(records: &[DialogueRecord], vocab: &Vocabulary, cfg: &RunConfig) -> CmdResult<Vec<ConversationPair>> {
    Ok(encode_corpus(records, vocab, cfg.max_len)?)
}

fn cmd_pretrain(cfg: &RunConfig) -> CmdResult {
    let records = load_records(&cfg.corpus, "corpus")?;
    let tc = cfg.train_config();
    tc.validate()?;
    if tc.pretrain_steps == 0 {
        return Err(Failure::invalid("pretrain_steps must be positive"));
    }
    let vocab = Vocabulary::from_records(&records, cfg.vocab_limit())?;
    let pairs = encode(&records, &vocab, cfg)?;
    let mut model = fresh_model(cfg, &vocab)?;
    let out = prepare_out(cfg)?;
    let log_path = out.join("pretrain_log.jsonl");
    let mut lines = String::new();
    let every = tc.log_every;
    let curve = pretrain_seq2seq(&mut model, &pairs, &tc, &mut |step, nll| {
        if step % every == 0 {
            lines.push_str(&format!("{}\n", json!({"step": step, "L_NLL": nll})));
        }
    })?;
    fs::write(&log_path, lines)?;
    let mut meta = CheckpointMeta::new(CheckpointKind::Seq2seq, tc.pretrain_steps, cfg.seed);
    meta.train = Some(tc);
    meta.effective_config = Some(cfg.to_json());
    let dir = out.join("pretrained");
    save_checkpoint(&dir, &model, Some(&vocab), meta)?;
    println!(
        "pretrained {} steps: L_NLL {:.4} -> {:.4}; checkpoint {}",
        curve.len(),
        curve.first().copied().unwrap_or(f64::NAN),
        curve.last().copied().unwrap_or(f64::NAN),
        dir.display()
    );
    Ok(())
}

struct TrainSink {
    log: MetricsLog,
    out: PathBuf,
    vocab: Vocabulary,
    cfg: RunConfig,
    every: usize,
    last: usize,
}

impl TrainSink {
    fn meta(&self, step: usize, rng: &RngState) -> CheckpointMeta {
        let mut meta = CheckpointMeta::new(CheckpointKind::Full, step, self.cfg.seed);
        meta.train = Some(self.cfg.train_config());
        meta.rng = Some(rng.clone());
        meta.effective_config = Some(self.cfg.to_json());
        meta
    }
}

impl TrainObserver for TrainSink {
    fn on_record(&mut self, record: &StepRecord) -> emochat::Result<()> {
        self.log.append(record)
    }

    fn on_checkpoint(&mut self, step: usize, model: &Model, rng: &RngState) -> emochat::Result<()> {
        if self.every > 0 && step.is_multiple_of(self.every) {
            let dir = self.out.join("checkpoints").join(format!("step-{step:07}"));
            save_checkpoint(dir, model, Some(&self.vocab), self.meta(step, rng))?;
        }
        if step == self.last {
            save_checkpoint(self.out.join("final"), model, Some(&self.vocab), self.meta(step, rng))?;
        }
        Ok(())
    }
}

fn cmd_train(cfg: &RunConfig) -> CmdResult {
    let records = load_records(&cfg.corpus, "corpus")?;
    let tc = cfg.train_config();
    tc.validate()?;
    let start = match &cfg.checkpoint {
        Some(p) => {
            require(&cfg.checkpoint, "checkpoint")?;
            Some(read_checkpoint(p)?)
        }
        None => None,
    };
    let vocab = match start.as_ref().and_then(|c| c.vocab.clone()) {
        Some(v) => v,
        None => Vocabulary::from_records(&records, cfg.vocab_limit())?,
    };
    let pairs = encode(&records, &vocab, cfg)?;
    let validation = match &cfg.validation {
        Some(_) => Some(encode(&load_records(&cfg.validation, "validation corpus")?, &vocab, cfg)?),
        None => None,
    };
    let mut model = match &start {
        Some(c) if c.manifest.kind == CheckpointKind::Full => c.to_model()?,
        Some(c) => {
            let mut m = fresh_model(cfg, &vocab)?;
            warm_start(&mut m, c)?;
            m
        }
        None => fresh_model(cfg, &vocab)?,
    };
    let out = prepare_out(cfg)?;
    let mut sink = TrainSink {
        log: MetricsLog::create(out.join("metrics.jsonl"))?,
        out: out.clone(),
        vocab,
        cfg: cfg.clone(),
        every: tc.checkpoint_every,
        last: tc.max_steps,
    };
    let records = train(&mut model, &pairs, validation.as_deref(), &tc, &mut sink);
    sink.log.flush()?;
    let records = records?;
    if let Some(last) = records.last() {
        println!(
            "trained {} steps: L_total {:.4}, L_NLL {:.4}, L_KL {:.5}; final checkpoint {}",
            last.step,
            last.losses.total,
            last.losses.nll,
            last.losses.kl,
            out.join("final").display()
        );
    }
    Ok(())
}

fn read_lines(path: &Path) -> CmdResult<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::invalid(format!("cannot read {}: {e}", path.display())))?;
    Ok(text.lines().map(|l| tokenize(l).into_iter().map(String::from).collect()).collect())
}

fn read_ratings(path: &Path) -> CmdResult<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<usize>, _> = line.split(',').map(|s| s.trim().parse::<usize>()).collect();
        match row {
            Ok(r) => rows.push(r),
            // a header row is allowed
            Err(_) if i == 0 => {}
            Err(_) => return Err(Failure::invalid(format!("{}:{}: ratings must be counts", path.display(), i + 1))),
        }
    }
    Ok(rows)
}

fn load_full_model(cfg: &RunConfig) -> CmdResult<(Model, Vocabulary)> {
    let p = require(&cfg.checkpoint, "checkpoint")?;
    let ckpt = read_checkpoint(p)?;
    let model = ckpt.to_model()?;
    let vocab = ckpt
        .vocab
        .clone()
        .ok_or_else(|| Failure::invalid(format!("checkpoint {} has no vocabulary", p.display())))?;
    Ok((model, vocab))
}

fn cmd_eval(cfg: &RunConfig) -> CmdResult {
    let mut report = serde_json::Map::new();
    if cfg.hypotheses.is_some() || cfg.references.is_some() {
        let hyps = read_lines(require(&cfg.hypotheses, "hypotheses file")?)?;
        let refs = read_lines(require(&cfg.references, "references file")?)?;
        let m = metric_report(&hyps, &refs)?;
        report.insert("metrics".into(), serde_json::to_value(m).unwrap_or(Value::Null));
    } else if cfg.checkpoint.is_some() {
        let (model, vocab) = load_full_model(cfg)?;
        let records = load_records(&cfg.corpus, "corpus")?;
        let pairs = encode(&records, &vocab, cfg)?;
        let mut hyps = Vec::with_capacity(pairs.len());
        let mut refs = Vec::with_capacity(pairs.len());
        for (p, r) in pairs.iter().zip(&records) {
            let (_, out) = model.respond(p.post.ids(), cfg.max_decode_len)?;
            hyps.push(vocab.decode(&out));
            refs.push(tokenize(&r.response).into_iter().map(String::from).collect());
        }
        let m = metric_report(&hyps, &refs)?;
        let (prior, recognition) = selector_accuracy(&model, &pairs)?;
        report.insert("metrics".into(), serde_json::to_value(m).unwrap_or(Value::Null));
        report.insert("acc_prior".into(), json!(prior));
        report.insert("acc_recognition".into(), json!(recognition));
    }
    if cfg.human_scores.is_some() {
        let scores = read_human_scores(require(&cfg.human_scores, "human score file")?)?;
        report.insert(
            "human".into(),
            serde_json::to_value(summarize_human_scores(&scores)?).unwrap_or(Value::Null),
        );
    }
    if cfg.ratings.is_some() {
        let rows = read_ratings(require(&cfg.ratings, "ratings file")?)?;
        report.insert("fleiss_kappa".into(), json!(fleiss_kappa(&rows)?));
    }
    if report.is_empty() {
        return Err(Failure::invalid(
            "nothing to evaluate: give --hypotheses/--references, --checkpoint with --corpus, --human or --ratings",
        ));
    }
    let out = prepare_out(cfg)?;
    report.insert("effective_config".into(), cfg.to_json());
    let report = Value::Object(report);
    write_json(&out.join("report.json"), &report)?;
    if let Some(m) = report.get("metrics") {
        println!(
            "distinct-1 {} distinct-2 {} bleu-1 {} bleu-2 {}",
            m["distinct_1"], m["distinct_2"], m["bleu_1"], m["bleu_2"]
        );
    }
    Ok(())
}

fn cmd_analyze_eip(cfg: &RunConfig) -> CmdResult {
    let records = load_records(&cfg.corpus, "corpus")?;
    let m = analyze_eip(&records, cfg.eip_mode);
    let out = prepare_out(cfg)?;
    let path = out.join("eip.csv");
    fs::write(&path, m.to_csv())?;
    println!("counted {} pairs; wrote {}", m.total(), path.display());
    Ok(())
}

fn cmd_project_emotions(cfg: &RunConfig) -> CmdResult {
    let (model, vocab) = load_full_model(cfg)?;
    let records = load_records(&cfg.corpus, "corpus")?;
    let n = cfg.samples.min(records.len());
    if n < 1 {
        return Err(Failure::invalid("samples must be positive"));
    }
    let pairs = encode(&records[..n], &vocab, cfg)?;
    let (prior, recog) = emotion_samples(&model, &pairs)?;
    let a: Vec<Vec<f64>> = prior.iter().map(|e| e.0.to_vec()).collect();
    let b: Vec<Vec<f64>> = recog.iter().map(|e| e.0.to_vec()).collect();
    let joint: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
    let proj = pca_project(&joint, 2)?;
    let mut csv = String::from("index,source,pc1,pc2\n");
    for (i, c) in proj.coords.iter().enumerate() {
        let (src, idx) = if i < n { ("prior", i) } else { ("recognition", i - n) };
        csv.push_str(&format!("{idx},{src},{},{}\n", c[0], c[1]));
    }
    let out = prepare_out(cfg)?;
    fs::write(out.join("emotion_pca.csv"), csv)?;
    let summary = json!({
        "samples": n,
        "mean_matched_distance": matched_pca_distance(&a, &b)?,
        "variances": proj.variances,
        "components": proj.components,
        "effective_config": cfg.to_json(),
    });
    write_json(&out.join("emotion_pca.json"), &summary)?;
    println!("projected {n} prior/recognition pairs; wrote {}", out.join("emotion_pca.csv").display());
    Ok(())
}

fn cmd_chat(cfg: &RunConfig) -> CmdResult {
    let (model, vocab) = load_full_model(cfg)?;
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        let tokens = tokenize(&line);
        if tokens.is_empty() {
            break;
        }
        let mut post = encode_text(&tokens, &vocab)?;
        post.0.truncate(cfg.max_len);
        let started = Instant::now();
        let (emotion, response) = model.respond(post.ids(), cfg.max_decode_len)?;
        let latency = started.elapsed();
        let dist: Vec<String> = EmotionCategory::ALL.iter().map(|c| format!("{c}={:.3}", emotion.0[c.index()])).collect();
        writeln!(stdout, "emotion: {}", dist.join(" "))?;
        writeln!(stdout, "response: {}", vocab.decode(&response).join(" "))?;
        writeln!(stdout, "latency_ms: {:.3}", latency.as_secs_f64() * 1e3)?;
        stdout.flush()?;
    }
    Ok(())
}
