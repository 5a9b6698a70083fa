//! Subcommand implementations behind the `anchorreg` binary.
//!
//! Every command writes a `manifest.txt` next to its outputs: the command
//! name, the seed, an echo of the configuration, and a SHA-256 per file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anchorreg::dataset::Dataset;
use anchorreg::encoder::{read_checkpoint, write_checkpoint, EncoderParams, TokenizerConfig};
use anchorreg::graph::degree_stats;
use anchorreg::metrics::{align, compute_propensities, evaluate, BucketSpec, EvalReport, DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B};
use anchorreg::retrieval::{batch_top_k, build_index, format_predictions, RankedList};
use anchorreg::synthetic::{generate_synthetic, SyntheticSpec};
use anchorreg::trainer::{
    augment_ground_truth, densify_graphs, history_csv, prune_graphs, train, Ablation, CheckpointMeta, EpochRecord,
    RunConfig, TokenizedCorpus, TrainObserver, TrainOutput,
};
use anchorreg::Error;
use anyhow::{bail, Context, Result};
use sha2::{Digest, Sha256};

pub const CHECKPOINT_FILE: &str = "encoder.ckpt";
pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects manifest lines, then hashes the listed files on [`Manifest::write`].
pub struct Manifest {
    text: String,
    files: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self { text: format!("command = {command}\nseed = {seed}\n"), files: Vec::new() }
    }

    /// Echoes `key = value` lines under a prefix.
    pub fn echo(&mut self, prefix: &str, text: &str) {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let _ = writeln!(self.text, "{prefix}.{line}");
        }
    }

    pub fn add_file(&mut self, path: impl Into<PathBuf>) {
        self.files.push(path.into());
    }

    /// Writes `dir/manifest.txt`. File paths are stored relative to `dir`.
    pub fn write(mut self, dir: &Path) -> Result<PathBuf> {
        self.files.sort();
        self.files.dedup();
        for f in &self.files {
            let bytes = std::fs::read(f).with_context(|| format!("hashing {}", f.display()))?;
            let rel = f.strip_prefix(dir).unwrap_or(f);
            let _ = writeln!(self.text, "file.{} = sha256:{}", rel.display(), sha256_hex(&bytes));
        }
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, &self.text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Reads a run configuration, or the defaults when `path` is `None`, then
/// applies `key=value` overrides.
pub fn load_run_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    for o in overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("override `{o}` is not key=value"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_synthetic_spec(path: Option<&Path>) -> Result<SyntheticSpec> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading spec {}", p.display()))?;
            Ok(SyntheticSpec::parse(&text).with_context(|| format!("in spec {}", p.display()))?)
        }
        None => Ok(SyntheticSpec::default()),
    }
}

/// `synth`: generates a planted-topic dataset into `out`.
pub fn cmd_synth(spec: &SyntheticSpec, out: &Path) -> Result<Vec<PathBuf>> {
    let synthetic = generate_synthetic(spec)?;
    let ds = Dataset::from_synthetic(&synthetic)?;
    let written = ds.save(out).with_context(|| format!("saving dataset to {}", out.display()))?;
    let mut manifest = Manifest::new("synth", spec.seed);
    manifest.echo("spec", &spec.to_text());
    for p in &written {
        manifest.add_file(p);
    }
    manifest.write(out)?;
    Ok(written)
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

/// `augment`: writes a copy of the dataset whose graphs are densified by
/// random walks with restart.
pub fn cmd_augment(data: &Path, cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut ds = load_dataset(data)?;
    let dense = densify_graphs(&ds.train, &cfg.walk)?;
    for (set, pair) in ds.train.anchor_sets.iter_mut().zip(dense) {
        log::info!(
            "{}: point edges {} -> {}, label edges {} -> {}",
            set.name,
            set.point_graph.num_edges(),
            pair.point.num_edges(),
            set.label_graph.num_edges(),
            pair.label.num_edges()
        );
        set.point_graph = pair.point;
        set.label_graph = pair.label;
    }
    save_with_manifest(&ds, "augment", cfg, out)
}

/// `prune`: drops graph edges whose endpoints score at or below `threshold`
/// under the encoder in `checkpoint`.
pub fn cmd_prune(data: &Path, checkpoint: &Path, threshold: f64, cfg: &RunConfig, out: &Path) -> Result<usize> {
    let mut ds = load_dataset(data)?;
    let params = read_checkpoint(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    check_vocab(&params, &cfg.encoder.tokenizer)?;
    let refs: Vec<_> = ds
        .train
        .anchor_sets
        .iter()
        .map(|s| anchorreg::trainer::GraphPair { point: s.point_graph.clone(), label: s.label_graph.clone() })
        .collect();
    let tokens = TokenizedCorpus::new(&ds.train, &cfg.encoder.tokenizer);
    let (pruned, removed) = prune_graphs(&refs, &tokens, &params, threshold)?;
    for (set, pair) in ds.train.anchor_sets.iter_mut().zip(pruned) {
        set.point_graph = pair.point;
        set.label_graph = pair.label;
    }
    log::info!("removed {removed} edges");
    save_with_manifest(&ds, "prune", cfg, out)?;
    Ok(removed)
}

fn save_with_manifest(ds: &Dataset, command: &str, cfg: &RunConfig, out: &Path) -> Result<()> {
    let written = ds.save(out).with_context(|| format!("saving dataset to {}", out.display()))?;
    let mut manifest = Manifest::new(command, cfg.train.seed);
    manifest.echo("config", &cfg.to_text());
    for p in written {
        manifest.add_file(p);
    }
    manifest.write(out)?;
    Ok(())
}

fn check_vocab(params: &EncoderParams, tokenizer: &TokenizerConfig) -> Result<()> {
    if params.vocab_size() != tokenizer.hash_buckets {
        return Err(Error::DimensionMismatch {
            context: "checkpoint vocabulary vs tokenizer hash_buckets",
            expected: tokenizer.hash_buckets,
            actual: params.vocab_size(),
        }
        .into());
    }
    Ok(())
}

/// Writes the latest checkpoint as training goes.
struct CheckpointWriter<'a> {
    dir: &'a Path,
}

impl TrainObserver for CheckpointWriter<'_> {
    fn on_epoch(&mut self, r: &EpochRecord) -> anchorreg::Result<()> {
        log::info!(
            "epoch {:>4}  objective {:.6}  task {:.6}  reg_x {:.6}  reg_z {:.6}  pruned {}",
            r.epoch,
            r.objective,
            r.task_loss,
            r.reg_x,
            r.reg_z,
            r.edges_pruned
        );
        Ok(())
    }

    fn on_checkpoint(&mut self, meta: &CheckpointMeta, params: &EncoderParams) -> anchorreg::Result<()> {
        write_checkpoint(self.dir.join(CHECKPOINT_FILE), params)?;
        let p = self.dir.join("checkpoint.meta");
        std::fs::write(&p, meta.to_text()).map_err(|source| Error::Io { path: p, source })
    }
}

/// Applies the ablation to both the configuration and the corpus.
pub fn ablated(ds: &Dataset, cfg: &RunConfig, ablation: Ablation) -> Result<(Dataset, RunConfig)> {
    let cfg = cfg.clone().with_ablation(ablation);
    let mut ds = ds.clone();
    if ablation.aug_gt {
        ds.train = augment_ground_truth(&ds.train)?;
    }
    Ok((ds, cfg))
}

/// `train`: fits an encoder and writes checkpoint, history and manifest.
pub fn cmd_train(data: &Path, cfg: &RunConfig, ablation: Ablation, out: &Path) -> Result<TrainOutput> {
    let ds = load_dataset(data)?;
    let (ds, cfg) = ablated(&ds, cfg, ablation)?;
    create_dir(out)?;
    let config_path = out.join(CONFIG_FILE);
    write_file(&config_path, cfg.to_text())?;
    let result = train(&ds.train, &cfg, &mut CheckpointWriter { dir: out });
    let output = match result {
        Ok(o) => o,
        Err(Error::NonFinite { context }) => {
            let p = out.join("failed_batch.txt");
            write_file(&p, format!("{context}\n"))?;
            bail!("training diverged: non-finite value in {context} (details in {})", p.display());
        }
        Err(e) => return Err(e.into()),
    };
    let ckpt = out.join(CHECKPOINT_FILE);
    write_checkpoint(&ckpt, &output.params)?;
    let history = out.join("history.csv");
    write_file(&history, history_csv(&output.history))?;
    let mut manifest = Manifest::new("train", cfg.train.seed);
    manifest.echo("ablation", &ablation_text(ablation));
    manifest.echo("config", &cfg.to_text());
    for p in [ckpt, out.join("checkpoint.meta"), config_path, history] {
        manifest.add_file(p);
    }
    manifest.write(out)?;
    Ok(output)
}

fn ablation_text(a: Ablation) -> String {
    format!(
        "no_prune = {}\nno_doc_graph = {}\nno_lbl_graph = {}\naug_gt = {}\n",
        a.no_prune, a.no_doc_graph, a.no_lbl_graph, a.aug_gt
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    Test,
    Train,
}

impl std::str::FromStr for Split {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(Split::Test),
            "train" => Ok(Split::Train),
            _ => bail!("unknown split `{s}` (expected test or train)"),
        }
    }
}

/// Parses a comma-separated k list such as `1,3,5`.
pub fn parse_ks(s: &str) -> Result<Vec<usize>> {
    let ks = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad k `{p}`")))
        .collect::<Result<Vec<_>>>()?;
    if ks.is_empty() || ks.contains(&0) {
        bail!("k list must contain positive integers");
    }
    Ok(ks)
}

/// Ranked predictions plus the report over one split.
pub struct Evaluation {
    pub predictions: Vec<RankedList>,
    pub report: EvalReport,
}

/// Retrieves and scores one split. Anchor sets are never read.
pub fn evaluate_split(ds: &Dataset, params: &EncoderParams, tokenizer: &TokenizerConfig, ks: &[usize], split: Split) -> Result<Evaluation> {
    check_vocab(params, tokenizer)?;
    let k_max = ks.iter().copied().max().context("empty k list")?;
    let (queries, truth) = match split {
        Split::Test => (&ds.test_points, &ds.test_truth),
        Split::Train => (&ds.train.points, &ds.train.ground_truth),
    };
    let index = build_index(&ds.train.labels, params, tokenizer)?;
    let texts: Vec<&str> = queries.iter().map(|r| r.text.as_str()).collect();
    let predictions = batch_top_k(&texts, &index, params, tokenizer, k_max)?;
    let gt = &ds.train.ground_truth;
    let propensities = compute_propensities(gt, DEFAULT_PROPENSITY_A, DEFAULT_PROPENSITY_B)?;
    let report = evaluate(&predictions, truth, &propensities, &gt.col_counts(), ks, &BucketSpec::default())?;
    Ok(Evaluation { predictions, report })
}

/// Locates the run configuration for a checkpoint: an explicit path, else
/// `config.txt` beside the checkpoint, else the defaults.
pub fn config_for_checkpoint(checkpoint: &Path, explicit: Option<&Path>) -> Result<RunConfig> {
    if let Some(p) = explicit {
        return load_run_config(Some(p), &[]);
    }
    let beside = checkpoint.with_file_name(CONFIG_FILE);
    if beside.is_file() {
        load_run_config(Some(&beside), &[])
    } else {
        log::warn!("no {CONFIG_FILE} beside {}; using defaults", checkpoint.display());
        Ok(RunConfig::default())
    }
}

/// Output paths of `eval` for a report path such as `report.csv`.
pub fn eval_outputs(out: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (out.to_path_buf(), out.with_extension("table.txt"), out.with_extension("predictions.txt"))
}

/// `eval`: writes the metric CSV, an aligned table and the predictions.
pub fn cmd_eval(data: &Path, checkpoint: &Path, cfg: &RunConfig, ks: &[usize], split: Split, out: &Path) -> Result<EvalReport> {
    let ds = Dataset::load_without_anchors(data).with_context(|| format!("loading dataset {}", data.display()))?;
    let params = read_checkpoint(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let eval = evaluate_split(&ds, &params, &cfg.encoder.tokenizer, ks, split)?;
    let (csv, table, preds) = eval_outputs(out);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_file(&csv, eval.report.to_csv())?;
    write_file(&table, eval.report.to_table())?;
    write_file(&preds, format_predictions(ds.train.num_labels(), &eval.predictions))?;
    Ok(eval.report)
}

/// Trains on `ds` under one ablation and scores the test split.
pub fn train_and_evaluate(ds: &Dataset, cfg: &RunConfig, ablation: Ablation, ks: &[usize]) -> Result<(TrainOutput, Evaluation)> {
    let (run_ds, run_cfg) = ablated(ds, cfg, ablation)?;
    let output = train(&run_ds.train, &run_cfg, &mut ())?;
    // Score against the original split so every variant sees the same truth.
    let eval = evaluate_split(ds, &output.params, &run_cfg.encoder.tokenizer, ks, Split::Test)?;
    Ok((output, eval))
}

/// Row names and switches of the ablation table, in order.
pub fn ablation_rows() -> [(&'static str, Ablation); 5] {
    [
        ("full", Ablation::default()),
        ("No Pruning", Ablation { no_prune: true, ..Default::default() }),
        ("No Doc. Graph", Ablation { no_doc_graph: true, ..Default::default() }),
        ("No Lbl. Graph", Ablation { no_lbl_graph: true, ..Default::default() }),
        ("AugGT", Ablation { aug_gt: true, ..Default::default() }),
    ]
}

pub const ABLATION_COLUMNS: [&str; 5] = ["P@1", "P@3", "P@5", "N@3", "N@5"];

/// One row of the ablation table, values as fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub name: String,
    pub values: [f64; 5],
}

fn ablation_values(report: &EvalReport) -> Result<[f64; 5]> {
    let at = |v: &[f64], k: usize| -> Result<f64> {
        let j = report.ks.iter().position(|&x| x == k).with_context(|| format!("report lacks k={k}"))?;
        Ok(v[j])
    };
    let o = &report.overall;
    Ok([at(&o.p, 1)?, at(&o.p, 3)?, at(&o.p, 5)?, at(&o.n, 3)?, at(&o.n, 5)?])
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut lines = vec![std::iter::once("method".to_string()).chain(ABLATION_COLUMNS.iter().map(|c| c.to_string())).collect()];
    for r in rows {
        let mut cells = vec![r.name.clone()];
        cells.extend(r.values.iter().map(|v| format!("{:.2}", v * 100.0)));
        lines.push(cells);
    }
    align(&lines)
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = format!("method,{}\n", ABLATION_COLUMNS.join(","));
    for r in rows {
        let vals: Vec<String> = r.values.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(s, "{},{}", r.name, vals.join(","));
    }
    s
}

/// `ablate`: the full method and four ablations under one seed.
pub fn cmd_ablate(data: &Path, cfg: &RunConfig, out: &Path) -> Result<Vec<AblationRow>> {
    let ds = load_dataset(data)?;
    let mut rows = Vec::new();
    for (name, ablation) in ablation_rows() {
        log::info!("ablation run: {name}");
        let (_, eval) = train_and_evaluate(&ds, cfg, ablation, &[1, 3, 5])?;
        rows.push(AblationRow { name: name.to_string(), values: ablation_values(&eval.report)? });
    }
    create_dir(out)?;
    let table = out.join("ablation.txt");
    let csv = out.join("ablation.csv");
    write_file(&table, ablation_table(&rows))?;
    write_file(&csv, ablation_csv(&rows))?;
    let mut manifest = Manifest::new("ablate", cfg.train.seed);
    manifest.echo("config", &cfg.to_text());
    manifest.add_file(table);
    manifest.add_file(csv);
    manifest.write(out)?;
    Ok(rows)
}

/// `inspect`: degree statistics of every graph, and checkpoint shapes.
pub fn cmd_inspect(data: Option<&Path>, checkpoint: Option<&Path>) -> Result<String> {
    if data.is_none() && checkpoint.is_none() {
        bail!("inspect needs --data or --checkpoint");
    }
    let mut s = String::new();
    if let Some(dir) = data {
        let ds = load_dataset(dir)?;
        let _ = writeln!(
            s,
            "points {}  labels {}  test points {}  positives {}",
            ds.train.num_points(),
            ds.train.num_labels(),
            ds.test_points.len(),
            ds.train.ground_truth.nnz()
        );
        let mut lines = vec![["set", "graph", "rows", "anchors", "edges", "avg/row", "avg/anchor", "isolated"]
            .map(String::from)
            .to_vec()];
        for set in &ds.train.anchor_sets {
            for (kind, g) in [("point", &set.point_graph), ("label", &set.label_graph)] {
                let d = degree_stats(g);
                lines.push(vec![
                    set.name.clone(),
                    kind.to_string(),
                    d.rows.to_string(),
                    d.cols.to_string(),
                    d.edges.to_string(),
                    format!("{:.2}", d.avg_per_row),
                    format!("{:.2}", d.avg_per_col),
                    d.isolated_rows.to_string(),
                ]);
            }
        }
        s.push_str(&align(&lines));
    }
    if let Some(p) = checkpoint {
        let params = read_checkpoint(p).with_context(|| format!("reading {}", p.display()))?;
        let _ = writeln!(
            s,
            "checkpoint {}: V={} H={} D={} parameters={}",
            p.display(),
            params.vocab_size(),
            params.hidden_dim(),
            params.output_dim(),
            params.num_parameters()
        );
    }
    Ok(s)
}
