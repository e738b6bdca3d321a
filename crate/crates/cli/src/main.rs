//! Batch pipeline driver: synthesize corpora, learn latent semantics,
//! export kernels, and evaluate classification quality.
//!
//! Outputs split into deterministic report files (byte-identical across
//! reruns with the same flags) and `*_timings.txt` sidecars holding
//! wall-clock measurements.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use lsl_core::semantics::{hi_kernel, mid_level_histograms, rollup_partition, SemanticHistogram};
use lsl_core::textio::{format_real, write_matrix, write_text};
use lsl_core::{
    generate_synthetic, knn_classify, metrics, read_assignment, run_pipeline, write_assignment,
    Corpus, Error, Mode, PipelineOutcome,
};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

#[derive(Parser)]
#[command(
    name = "lsl",
    version,
    about = "Latent semantic learning over bag-of-features video corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus with planted feature clusters.
    Synth(SynthArgs),
    /// Learn a semantic clustering of the feature vocabulary.
    Learn(LearnArgs),
    /// Roll counts up to semantic histograms and export their kernel.
    Kernel(KernelArgs),
    /// Evaluate kernel k-NN classification and clustering agreement.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of planted feature clusters (also the number of labels).
    #[arg(long)]
    clusters: usize,
    /// Features in each planted cluster.
    #[arg(long)]
    features_per_cluster: usize,
    /// Number of videos to draw.
    #[arg(long)]
    videos: usize,
    /// Probability that a count lands outside its video's own cluster.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corpus file to write.
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by learn/kernel/eval. Every field can also come from a JSON
/// config file; explicit flags win.
#[derive(Args)]
struct ConfigArgs {
    /// JSON config file with the fields of PipelineConfig.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus file to read.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory for output files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of semantic clusters.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Pipeline flavor: slsl (plain) or s2lsl (hypergraph-regularized).
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Feasibility tolerance for the sparse-coding solver.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Neighbors consulted by the kernel k-NN classifier.
    #[arg(long = "knn-k")]
    knn_k: Option<usize>,
}

#[derive(Args)]
struct LearnArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Also write affinity/Laplacian (and regularizer) matrices.
    #[arg(long)]
    dump_matrices: bool,
}

#[derive(Args)]
struct KernelArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Assignment file (default: <out dir>/assignment.txt).
    #[arg(long)]
    assignment: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Assignment file (default: <out dir>/assignment.txt).
    #[arg(long)]
    assignment: Option<PathBuf>,
    /// Fraction of each label's videos held out for testing.
    #[arg(long, default_value_t = 0.25)]
    holdout: f64,
}

/// Fully resolved run configuration after merging config file and flags.
#[derive(Debug, Clone)]
struct PipelineConfig {
    corpus_path: PathBuf,
    output_dir: PathBuf,
    k: Option<usize>,
    mode: Mode,
    seed: u64,
    solver_tolerance: f64,
    knn_k: usize,
}

/// On-disk shape of the optional config file; all fields optional.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    corpus_path: Option<PathBuf>,
    output_dir: Option<PathBuf>,
    #[serde(rename = "K")]
    k: Option<usize>,
    mode: Option<String>,
    seed: Option<u64>,
    solver_tolerance: Option<f64>,
    knn_k: Option<usize>,
}

impl PipelineConfig {
    fn resolve(args: &ConfigArgs) -> Result<Self, Failure> {
        let stage = "resolving configuration";
        let file = match &args.config {
            Some(path) => {
                let text = lsl_core::textio::read_text(path).map_err(|e| Failure::at(stage, e))?;
                serde_json::from_str::<ConfigFile>(&text).map_err(|e| {
                    Failure::at(
                        stage,
                        Error::Parse {
                            path: path.display().to_string(),
                            message: e.to_string(),
                        },
                    )
                })?
            }
            None => ConfigFile::default(),
        };
        let corpus_path = args
            .corpus
            .clone()
            .or(file.corpus_path)
            .ok_or_else(|| Failure::usage("a corpus is required (--corpus or config file)"))?;
        let output_dir = args
            .out
            .clone()
            .or(file.output_dir)
            .ok_or_else(|| Failure::usage("an output directory is required (--out or config file)"))?;
        let mode = args
            .mode
            .clone()
            .or(file.mode)
            .map(|m| m.parse::<Mode>())
            .transpose()
            .map_err(|e| Failure::at(stage, e))?
            .unwrap_or(Mode::Slsl);
        let k = args.k.or(file.k);
        if let Some(k) = k {
            if k < 2 {
                return Err(Failure::usage(&format!("K must be at least 2, got {k}")));
            }
        }
        let solver_tolerance = args
            .tolerance
            .or(file.solver_tolerance)
            .unwrap_or(lsl_core::DEFAULT_TOLERANCE);
        if !(solver_tolerance > 0.0) {
            return Err(Failure::usage(&format!(
                "solver tolerance must be positive, got {solver_tolerance}"
            )));
        }
        let knn_k = args.knn_k.or(file.knn_k).unwrap_or(3);
        if knn_k < 1 {
            return Err(Failure::usage("knn-k must be at least 1"));
        }
        Ok(PipelineConfig {
            corpus_path,
            output_dir,
            k,
            mode,
            seed: args.seed.or(file.seed).unwrap_or(0),
            solver_tolerance,
            knn_k,
        })
    }

    fn require_k(&self) -> Result<usize, Failure> {
        self.k
            .ok_or_else(|| Failure::usage("K is required (--K or config file)"))
    }

    fn out_file(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

/// A command failure carrying the exit class: 1 for usage/validation
/// problems, 2 for runtime failures.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn at(stage: &str, err: Error) -> Self {
        Failure {
            code: if err.is_input_error() { 1 } else { 2 },
            message: format!("{stage}: {err}"),
        }
    }

    fn usage(message: &str) -> Self {
        Failure {
            code: 1,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reserves 2 for usage errors; remap to the documented 1,
            // keeping 0 for --help/--version.
            let wants_stderr = e.use_stderr();
            let _ = e.print();
            return if wants_stderr {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Learn(args) => cmd_learn(args),
        Command::Kernel(args) => cmd_kernel(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let corpus = generate_synthetic(
        args.clusters,
        args.features_per_cluster,
        args.videos,
        args.noise,
        args.seed,
    )
    .map_err(|e| Failure::at("generating corpus", e))?;
    corpus
        .save(&args.out)
        .map_err(|e| Failure::at("writing corpus", e))?;
    println!(
        "wrote {} videos x {} features to {}",
        corpus.num_videos(),
        corpus.num_features(),
        args.out.display()
    );
    Ok(())
}

fn cmd_learn(args: LearnArgs) -> Result<(), Failure> {
    let config = PipelineConfig::resolve(&args.config)?;
    let k = config.require_k()?;
    let corpus =
        Corpus::load(&config.corpus_path).map_err(|e| Failure::at("loading corpus", e))?;
    let outcome = run_pipeline(&corpus, k, config.mode, config.seed, config.solver_tolerance)
        .map_err(|e| Failure::at("learning semantics", e))?;

    ensure_dir(&config.output_dir)?;
    let write_stage = "writing outputs";
    write_assignment(
        &config.out_file("assignment.txt"),
        corpus.feature_ids(),
        &outcome.assignment,
    )
    .map_err(|e| Failure::at(write_stage, e))?;
    write_matrix(&config.out_file("embedding.txt"), &outcome.embedding.matrix)
        .map_err(|e| Failure::at(write_stage, e))?;
    if args.dump_matrices {
        write_matrix(&config.out_file("affinity.txt"), &outcome.graph.affinity)
            .map_err(|e| Failure::at(write_stage, e))?;
        write_matrix(&config.out_file("laplacian.txt"), &outcome.graph.laplacian)
            .map_err(|e| Failure::at(write_stage, e))?;
        if let Some(h) = &outcome.hypergraph {
            write_matrix(&config.out_file("hypergraph_laplacian.txt"), &h.laplacian)
                .map_err(|e| Failure::at(write_stage, e))?;
            write_matrix(&config.out_file("regularizer.txt"), &h.regularizer)
                .map_err(|e| Failure::at(write_stage, e))?;
        }
    }
    write_text(
        &config.out_file("learn_report.txt"),
        &learn_report(&config, k, &corpus, &outcome),
    )
    .map_err(|e| Failure::at(write_stage, e))?;
    write_text(
        &config.out_file("learn_timings.txt"),
        &timing_report(&outcome.stage_timings),
    )
    .map_err(|e| Failure::at(write_stage, e))?;
    println!(
        "learned {k} semantic clusters over {} features into {}",
        corpus.num_features(),
        config.output_dir.display()
    );
    Ok(())
}

fn learn_report(
    config: &PipelineConfig,
    k: usize,
    corpus: &Corpus,
    outcome: &PipelineOutcome,
) -> String {
    let objectives: Vec<f64> = outcome.codes.iter().map(|c| c.objective).collect();
    let min = objectives.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = objectives.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = objectives.iter().sum::<f64>() / objectives.len() as f64;
    let nonzeros = outcome.graph.affinity.iter().filter(|&&v| v != 0.0).count();
    let mut sizes = vec![0usize; k];
    for &c in &outcome.assignment.assignment {
        sizes[c] += 1;
    }
    let mut report = String::from("latent semantic learning report\n");
    report.push_str(&format!("corpus: {}\n", config.corpus_path.display()));
    report.push_str(&format!("videos: {}\n", corpus.num_videos()));
    report.push_str(&format!("features: {}\n", corpus.num_features()));
    report.push_str(&format!("clusters: {k}\n"));
    report.push_str(&format!("mode: {}\n", config.mode));
    report.push_str(&format!("seed: {}\n", config.seed));
    report.push_str(&format!(
        "solver_tolerance: {}\n",
        format_real(config.solver_tolerance)
    ));
    report.push_str(&format!(
        "code objectives: min {} mean {} max {}\n",
        format_real(min),
        format_real(mean),
        format_real(max)
    ));
    report.push_str(&format!("affinity nonzeros: {nonzeros}\n"));
    let eigenvalues: Vec<String> = outcome
        .embedding
        .eigenvalues
        .iter()
        .map(|&v| format_real(v))
        .collect();
    report.push_str(&format!("embedding eigenvalues: {}\n", eigenvalues.join(" ")));
    report.push_str(&format!(
        "kmeans inertia: {}\n",
        format_real(outcome.assignment.inertia)
    ));
    let sizes: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
    report.push_str(&format!("cluster sizes: {}\n", sizes.join(" ")));
    report
}

fn timing_report(timings: &[(&'static str, Duration)]) -> String {
    let mut out = String::from("stage\tseconds\n");
    let mut total = Duration::ZERO;
    for (stage, elapsed) in timings {
        out.push_str(&format!("{stage}\t{:.6}\n", elapsed.as_secs_f64()));
        total += *elapsed;
    }
    out.push_str(&format!("total\t{:.6}\n", total.as_secs_f64()));
    out
}

/// Reads an assignment file and checks it covers exactly the corpus's
/// features in order. Returns the partition and its cluster count.
fn load_partition(
    path: &Path,
    corpus: &Corpus,
) -> Result<(Vec<usize>, usize), Failure> {
    let stage = "loading assignment";
    let pairs = read_assignment(path).map_err(|e| Failure::at(stage, e))?;
    if pairs.len() != corpus.num_features() {
        return Err(Failure::at(
            stage,
            Error::DimensionMismatch(format!(
                "assignment lists {} features, corpus has {}",
                pairs.len(),
                corpus.num_features()
            )),
        ));
    }
    for (pair, expected) in pairs.iter().zip(corpus.feature_ids()) {
        if &pair.0 != expected {
            return Err(Failure::at(
                stage,
                Error::InvalidArgument(format!(
                    "assignment feature {:?} does not match corpus feature {:?}",
                    pair.0, expected
                )),
            ));
        }
    }
    let partition: Vec<usize> = pairs.into_iter().map(|(_, c)| c).collect();
    let clusters = partition.iter().max().copied().unwrap_or(0) + 1;
    Ok((partition, clusters))
}

fn cmd_kernel(args: KernelArgs) -> Result<(), Failure> {
    let config = PipelineConfig::resolve(&args.config)?;
    let corpus =
        Corpus::load(&config.corpus_path).map_err(|e| Failure::at("loading corpus", e))?;
    let assignment_path = args
        .assignment
        .unwrap_or_else(|| config.out_file("assignment.txt"));
    let (partition, clusters) = load_partition(&assignment_path, &corpus)?;

    let stage = "computing kernels";
    let semantic = rollup_partition(&corpus, &partition, clusters)
        .map_err(|e| Failure::at(stage, e))?;
    let mid = mid_level_histograms(&corpus);
    let started = Instant::now();
    let semantic_kernel = hi_kernel(&semantic, &semantic).map_err(|e| Failure::at(stage, e))?;
    let semantic_elapsed = started.elapsed();
    let started = Instant::now();
    let mid_kernel = hi_kernel(&mid, &mid).map_err(|e| Failure::at(stage, e))?;
    let mid_elapsed = started.elapsed();

    ensure_dir(&config.output_dir)?;
    let write_stage = "writing outputs";
    semantic_kernel
        .write_csv(&config.out_file("kernel.csv"))
        .map_err(|e| Failure::at(write_stage, e))?;

    // Conservation makes both diagonals the per-video masses; report the
    // check rather than assuming it.
    let diagonals_agree = (0..corpus.num_videos())
        .all(|n| semantic_kernel.values[(n, n)] == mid_kernel.values[(n, n)]);
    let total_mass: f64 = (0..corpus.num_videos())
        .map(|n| corpus.video_total(n) as f64)
        .sum();
    let mut report = String::from("kernel report\n");
    report.push_str(&format!("corpus: {}\n", config.corpus_path.display()));
    report.push_str(&format!("videos: {}\n", corpus.num_videos()));
    report.push_str(&format!("mid-level bins: {}\n", corpus.num_features()));
    report.push_str(&format!("semantic bins: {clusters}\n"));
    report.push_str(&format!(
        "compression ratio: {}\n",
        format_real(clusters as f64 / corpus.num_features() as f64)
    ));
    report.push_str(&format!("diagonal masses agree: {diagonals_agree}\n"));
    report.push_str(&format!("total count mass: {}\n", format_real(total_mass)));
    write_text(&config.out_file("kernel_report.txt"), &report)
        .map_err(|e| Failure::at(write_stage, e))?;
    write_text(
        &config.out_file("kernel_timings.txt"),
        &timing_report(&[
            ("semantic_kernel", semantic_elapsed),
            ("mid_level_kernel", mid_elapsed),
        ]),
    )
    .map_err(|e| Failure::at(write_stage, e))?;
    println!(
        "wrote {}x{} semantic kernel to {}",
        corpus.num_videos(),
        corpus.num_videos(),
        config.out_file("kernel.csv").display()
    );
    Ok(())
}

/// Count-weighted majority video label per feature; ties take the
/// lexicographically smallest label.
fn feature_label_reference(corpus: &Corpus) -> Vec<String> {
    let labels = corpus.labels().expect("caller checked labels");
    (0..corpus.num_features())
        .map(|j| {
            let mut tallies: BTreeMap<&str, u64> = BTreeMap::new();
            for n in 0..corpus.num_videos() {
                *tallies.entry(labels[n].as_str()).or_insert(0) += corpus.count(n, j);
            }
            let mut best: Option<(&str, u64)> = None;
            for (label, weight) in tallies {
                if best.map_or(true, |(_, w)| weight > w) {
                    best = Some((label, weight));
                }
            }
            best.expect("corpus has at least one video").0.to_string()
        })
        .collect()
}

/// Seeded per-label split. Labels with one video stay in training; others
/// hold out round(fraction * size), clamped to [1, size - 1].
fn split_videos(
    corpus: &Corpus,
    holdout: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), Failure> {
    if !(holdout > 0.0 && holdout < 1.0) {
        return Err(Failure::usage(&format!(
            "holdout fraction must be in (0, 1), got {holdout}"
        )));
    }
    let labels = corpus.labels().expect("caller checked labels");
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (n, label) in labels.iter().enumerate() {
        groups.entry(label.as_str()).or_default().push(n);
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (_, mut videos) in groups {
        videos.shuffle(&mut rng);
        let held = if videos.len() < 2 {
            0
        } else {
            ((holdout * videos.len() as f64).round() as usize).clamp(1, videos.len() - 1)
        };
        test.extend(videos.drain(..held));
        train.extend(videos);
    }
    if test.is_empty() {
        return Err(Failure::usage(
            "holdout produced no test videos; every label has a single video",
        ));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn select(histograms: &[SemanticHistogram], indices: &[usize]) -> Vec<SemanticHistogram> {
    indices.iter().map(|&n| histograms[n].clone()).collect()
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let config = PipelineConfig::resolve(&args.config)?;
    let corpus =
        Corpus::load(&config.corpus_path).map_err(|e| Failure::at("loading corpus", e))?;
    if corpus.labels().is_none() {
        return Err(Failure::at(
            "checking corpus",
            Error::InvalidArgument("evaluation needs a labeled corpus".into()),
        ));
    }
    let assignment_path = args
        .assignment
        .unwrap_or_else(|| config.out_file("assignment.txt"));
    let (partition, clusters) = load_partition(&assignment_path, &corpus)?;

    let stage = "evaluating";
    let reference = feature_label_reference(&corpus);
    let assignment_nmi = metrics::nmi(&partition, &reference);

    let (train, test) = split_videos(&corpus, args.holdout, config.seed)?;
    let labels = corpus.labels().expect("checked above");
    let train_labels: Vec<String> = train.iter().map(|&n| labels[n].clone()).collect();
    let test_labels: Vec<String> = test.iter().map(|&n| labels[n].clone()).collect();

    let semantic_all =
        rollup_partition(&corpus, &partition, clusters).map_err(|e| Failure::at(stage, e))?;
    let mid_all = mid_level_histograms(&corpus);

    let mut accuracies = Vec::new();
    let mut timings = Vec::new();
    for (name, histograms) in [("mid-level", &mid_all), ("semantic", &semantic_all)] {
        let train_h = select(histograms, &train);
        let test_h = select(histograms, &test);
        let train_kernel = hi_kernel(&train_h, &train_h).map_err(|e| Failure::at(stage, e))?;
        let started = Instant::now();
        let query_kernel = hi_kernel(&test_h, &train_h).map_err(|e| Failure::at(stage, e))?;
        let elapsed = started.elapsed();
        let predicted = knn_classify(&train_kernel, &train_labels, &query_kernel, config.knn_k)
            .map_err(|e| Failure::at(stage, e))?;
        accuracies.push((name, metrics::accuracy(&predicted, &test_labels)));
        timings.push((name, elapsed));
    }

    ensure_dir(&config.output_dir)?;
    let mut report = String::from("evaluation report\n");
    report.push_str(&format!("corpus: {}\n", config.corpus_path.display()));
    report.push_str(&format!(
        "videos: {} (train {}, test {})\n",
        corpus.num_videos(),
        train.len(),
        test.len()
    ));
    report.push_str(&format!("features: {}\n", corpus.num_features()));
    report.push_str(&format!("semantic clusters: {clusters}\n"));
    report.push_str(&format!(
        "compression ratio: {}\n",
        format_real(clusters as f64 / corpus.num_features() as f64)
    ));
    report.push_str(&format!("holdout: {}\n", format_real(args.holdout)));
    report.push_str(&format!("seed: {}\n", config.seed));
    report.push_str(&format!("knn k: {}\n", config.knn_k));
    report.push_str(&format!(
        "assignment nmi vs label reference: {}\n",
        format_real(assignment_nmi)
    ));
    for (name, accuracy) in &accuracies {
        report.push_str(&format!("{name} accuracy: {}\n", format_real(*accuracy)));
    }
    write_text(&config.out_file("eval_report.txt"), &report)
        .map_err(|e| Failure::at("writing outputs", e))?;

    let mut timing_lines: Vec<(&'static str, Duration)> = Vec::new();
    for (name, elapsed) in &timings {
        let tag: &'static str = match *name {
            "mid-level" => "mid_level_test_kernel",
            _ => "semantic_test_kernel",
        };
        timing_lines.push((tag, *elapsed));
    }
    let mut timing_text = timing_report(&timing_lines);
    let mid = timings[0].1.as_secs_f64();
    let semantic = timings[1].1.as_secs_f64();
    if semantic > 0.0 {
        timing_text.push_str(&format!("mid_over_semantic_ratio\t{:.3}\n", mid / semantic));
    }
    write_text(&config.out_file("eval_timings.txt"), &timing_text)
        .map_err(|e| Failure::at("writing outputs", e))?;

    for (name, accuracy) in &accuracies {
        println!("{name} accuracy: {accuracy:.4}");
    }
    println!("assignment nmi: {assignment_nmi:.4}");
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| {
        Failure::at(
            "creating output directory",
            Error::Io {
                path: dir.display().to_string(),
                source: e,
            },
        )
    })
}
