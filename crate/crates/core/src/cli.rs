//! Command-line interface.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::io::{self, MatrixFormat};
use crate::knockoff::run_knockoff_filter;
use crate::mmtest::MmConfig;
use crate::neighborhood::AuxiliarySpace;
use crate::pipeline::{bench_scenario, run_pipeline, PipelineConfig};
use crate::postcluster::{adjusted_rand, hamming_error, kmeans, pca_scores};
use crate::simgen::{
    gen_expression, gen_layout, screening_metrics, CountDistribution, GenSpec, LayoutSpec,
    SignalTier,
};

#[derive(Parser)]
#[command(
    name = "mmscreen",
    version,
    about = "Screen cluster-relevant features in spatial count matrices and control the FDR with resampling knockoffs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute per-gene statistics only (no selection threshold)
    Screen(PipelineArgs),
    /// Run the full knockoff-filtered screen, optionally clustering spots
    Knockoff(PipelineArgs),
    /// PCA + k-means on a listed gene subset
    Cluster(ClusterArgs),
    /// Generate a synthetic dataset with ground truth
    Simulate(SimulateArgs),
    /// Score predictions against ground truth files
    Evaluate(EvaluateArgs),
    /// Replicate a scenario and tabulate power/FDR (x100)
    Bench(BenchArgs),
}

#[derive(Args)]
struct PipelineArgs {
    /// key=value config file applied before any flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// Expression matrix path
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Matrix encoding: dense | sparse
    #[arg(long)]
    format: Option<String>,
    /// Spot coordinates file (2 or 3 columns)
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Precomputed distance matrix file
    #[arg(long)]
    dist: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Variance model: quasi-nb | quasi-poisson
    #[arg(long)]
    model: Option<String>,
    /// Mixture components K
    #[arg(long)]
    k_components: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Neighborhood exponent (r_n = n^beta)
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    m_phi: Option<f64>,
    #[arg(long)]
    mu_floor: Option<f64>,
    /// Worker threads (default: all cores, or MMSCREEN_THREADS)
    #[arg(long)]
    threads: Option<usize>,
    /// Target FDR for the knockoff filter
    #[arg(long)]
    q0: Option<f64>,
    /// Cluster spots on the selected genes into this many clusters
    #[arg(long)]
    cluster_k: Option<usize>,
    /// Principal components for post-selection clustering
    #[arg(long)]
    d_pcs: Option<usize>,
    /// k-means restarts
    #[arg(long)]
    n_init: Option<usize>,
    /// Emit statistics only, without the knockoff filter
    #[arg(long)]
    no_knockoff: bool,
}

impl PipelineArgs {
    fn into_config(self, knockoff_default: bool) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig {
            run_knockoff: knockoff_default,
            ..PipelineConfig::default()
        };
        if let Some(path) = &self.config {
            cfg.load_config_file(path)?;
        }
        let mut set = |key: &str, value: Option<String>| -> Result<()> {
            if let Some(v) = value {
                cfg.apply(key, &v)?;
            }
            Ok(())
        };
        set("matrix", self.matrix.map(|p| p.display().to_string()))?;
        set("format", self.format)?;
        set("coords", self.coords.map(|p| p.display().to_string()))?;
        set("dist", self.dist.map(|p| p.display().to_string()))?;
        set("out", self.out.map(|p| p.display().to_string()))?;
        set("model", self.model)?;
        set("k_components", self.k_components.map(|v| v.to_string()))?;
        set("max_iters", self.max_iters.map(|v| v.to_string()))?;
        set("rel_tol", self.rel_tol.map(|v| v.to_string()))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("beta", self.beta.map(|v| v.to_string()))?;
        set("m_phi", self.m_phi.map(|v| v.to_string()))?;
        set("mu_floor", self.mu_floor.map(|v| v.to_string()))?;
        set("threads", self.threads.map(|v| v.to_string()))?;
        set("q0", self.q0.map(|v| v.to_string()))?;
        set("k_clusters", self.cluster_k.map(|v| v.to_string()))?;
        set("d_pcs", self.d_pcs.map(|v| v.to_string()))?;
        set("n_init", self.n_init.map(|v| v.to_string()))?;
        if self.no_knockoff {
            cfg.run_knockoff = false;
        }
        if cfg.matrix_path.as_os_str().is_empty() {
            return Err(Error::Config("missing --matrix".into()));
        }
        if cfg.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("missing --out".into()));
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value = "dense")]
    format: String,
    /// File listing the gene ids to cluster on (one per line)
    #[arg(long)]
    genes: PathBuf,
    /// Number of clusters
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    d_pcs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n_init: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Layout kind: square | from-file
    #[arg(long, default_value = "square")]
    layout: String,
    /// Spot count (square layouts)
    #[arg(long, default_value_t = 900)]
    n: usize,
    /// Domain count
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Coordinates file (from-file layouts)
    #[arg(long)]
    coords: Option<PathBuf>,
    /// Domain labels file (from-file layouts)
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Feature count
    #[arg(long, default_value_t = 3000)]
    p: usize,
    /// Relevant feature count
    #[arg(long, default_value_t = 100)]
    s: usize,
    /// Count distribution: nb | pln
    #[arg(long, default_value = "nb")]
    dist: String,
    /// Signal tier: high | low
    #[arg(long, default_value = "high")]
    signal: String,
    #[arg(long, default_value_t = 0.30)]
    zero_rate: f64,
    #[arg(long, default_value_t = 5.0)]
    base_mean: f64,
    #[arg(long, default_value_t = 2.0)]
    nb_size: f64,
    #[arg(long, default_value_t = 0.5)]
    pln_sigma: f64,
    #[arg(long, default_value_t = 3.0)]
    fold_high: f64,
    #[arg(long, default_value_t = 1.5)]
    fold_low: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the matrix in sparse-triplet form
    #[arg(long)]
    sparse: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted labels file (spot_id, cluster)
    #[arg(long)]
    pred: Option<PathBuf>,
    /// Ground-truth labels file (spot_id, cluster)
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Per-gene report written by screen/knockoff
    #[arg(long)]
    report: Option<PathBuf>,
    /// Ground-truth relevant gene ids (one per line)
    #[arg(long)]
    truth_genes: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Scenario: layout1-high | layout1-low | layout1-pln | null
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    q0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override scenario spot count
    #[arg(long)]
    n: Option<usize>,
    /// Override scenario domain count
    #[arg(long)]
    k: Option<usize>,
    /// Override scenario feature count
    #[arg(long)]
    p: Option<usize>,
    /// Override scenario relevant count
    #[arg(long)]
    s: Option<usize>,
    /// Also cluster on the selection and report ARI
    #[arg(long)]
    cluster: bool,
    #[arg(long)]
    threads: Option<usize>,
}

/// Parse `argv` and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Screen(args) => {
            let cfg = args.into_config(false)?;
            let out = run_pipeline(&cfg)?;
            println!(
                "screened {} genes; report: {}",
                out.stats.len(),
                out.report_path.display()
            );
            Ok(())
        }
        Command::Knockoff(args) => {
            let cfg = args.into_config(true)?;
            let out = run_pipeline(&cfg)?;
            if let Some(run) = &out.knockoff {
                println!(
                    "screened {} genes; threshold {}; selected {}",
                    out.stats.len(),
                    run.threshold,
                    run.selected.len()
                );
            } else {
                println!("screened {} genes (no knockoff)", out.stats.len());
            }
            Ok(())
        }
        Command::Cluster(args) => cluster_cmd(args),
        Command::Simulate(args) => simulate_cmd(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Bench(args) => bench_cmd(args),
    }
}

fn cluster_cmd(args: ClusterArgs) -> Result<()> {
    let format = MatrixFormat::parse(&args.format)?;
    let matrix = io::load_matrix(&args.matrix, format)?;
    let wanted = io::load_id_file(&args.genes)?;
    let index: std::collections::HashMap<&str, usize> = matrix
        .gene_ids
        .iter()
        .enumerate()
        .map(|(j, g)| (g.as_str(), j))
        .collect();
    let mut cols = Vec::with_capacity(wanted.len());
    for g in &wanted {
        match index.get(g.as_str()) {
            Some(&j) => cols.push(j),
            None => return Err(Error::Data(format!("gene '{g}' not present in the matrix"))),
        }
    }
    let mut sel = Array2::zeros((matrix.n_spots(), cols.len()));
    for (c, &j) in cols.iter().enumerate() {
        sel.column_mut(c).assign(&matrix.values.column(j));
    }
    let pca = pca_scores(&sel, args.d_pcs)?;
    let res = kmeans(&pca.scores, args.k, args.seed, args.n_init)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("labels.tsv");
    io::save_labels(&matrix.spot_ids, &res.labels, &path)?;
    println!(
        "clustered {} spots on {} genes ({} components); labels: {}",
        matrix.n_spots(),
        cols.len(),
        pca.d_used,
        path.display()
    );
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let layout_spec = match args.layout.as_str() {
        "square" => LayoutSpec::SquareGrid {
            n: args.n,
            k: args.k,
        },
        "from-file" => {
            let coords_path = args
                .coords
                .as_ref()
                .ok_or_else(|| Error::Config("from-file layout needs --coords".into()))?;
            let labels_path = args
                .labels
                .as_ref()
                .ok_or_else(|| Error::Config("from-file layout needs --labels".into()))?;
            let coords = io::load_coordinates(coords_path)?;
            let (_, labels) = io::load_labels(labels_path)?;
            LayoutSpec::FromFile { coords, labels }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown layout '{other}' (expected square or from-file)"
            )));
        }
    };
    let layout = gen_layout(&layout_spec)?;
    let spec = GenSpec {
        p: args.p,
        s: args.s,
        dist: CountDistribution::parse(&args.dist)?,
        signal: SignalTier::parse(&args.signal)?,
        zero_rate: args.zero_rate,
        base_mean: args.base_mean,
        nb_size: args.nb_size,
        pln_sigma: args.pln_sigma,
        fold_high: args.fold_high,
        fold_low: args.fold_low,
        seed: args.seed,
    };
    let (matrix, truth) = gen_expression(&layout, &spec)?;

    std::fs::create_dir_all(&args.out)?;
    let format = if args.sparse {
        MatrixFormat::SparseTriplet
    } else {
        MatrixFormat::DenseDelimited
    };
    let matrix_name = if args.sparse { "matrix.sparse.tsv" } else { "matrix.tsv" };
    io::save_matrix(&matrix, &args.out.join(matrix_name), format)?;
    io::save_coordinates(&layout.coords, &args.out.join("coords.tsv"))?;
    io::save_labels(&matrix.spot_ids, &layout.labels, &args.out.join("domains.tsv"))?;
    let truth_ids: Vec<String> = truth.iter().map(|&j| matrix.gene_ids[j].clone()).collect();
    if !truth_ids.is_empty() {
        io::save_id_file(&truth_ids, &args.out.join("truth_genes.txt"))?;
    }
    io::save_key_values(&spec.manifest(&layout), &args.out.join("manifest.txt"))?;
    println!(
        "wrote {} spots x {} genes ({} relevant) to {}",
        matrix.n_spots(),
        matrix.n_genes(),
        truth.len(),
        args.out.display()
    );
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let mut printed = false;
    if let (Some(pred_path), Some(truth_path)) = (&args.pred, &args.truth) {
        let (pred_ids, pred_labels) = io::load_labels(pred_path)?;
        let (truth_ids, truth_labels) = io::load_labels(truth_path)?;
        let truth_map: std::collections::HashMap<&str, usize> = truth_ids
            .iter()
            .map(|s| s.as_str())
            .zip(truth_labels.iter().copied())
            .collect();
        let mut aligned_truth = Vec::with_capacity(pred_ids.len());
        for id in &pred_ids {
            match truth_map.get(id.as_str()) {
                Some(&l) => aligned_truth.push(l),
                None => {
                    return Err(Error::Data(format!("spot '{id}' missing from truth labels")));
                }
            }
        }
        println!("ari={}", adjusted_rand(&pred_labels, &aligned_truth)?);
        println!("hamming={}", hamming_error(&pred_labels, &aligned_truth)?);
        printed = true;
    }
    if let (Some(report_path), Some(genes_path)) = (&args.report, &args.truth_genes) {
        let (gene_ids, stats, selected) = read_report(report_path)?;
        let truth_ids = io::load_id_file(genes_path)?;
        let index: std::collections::HashMap<&str, usize> = gene_ids
            .iter()
            .enumerate()
            .map(|(j, g)| (g.as_str(), j))
            .collect();
        let mut truth = Vec::with_capacity(truth_ids.len());
        for g in &truth_ids {
            match index.get(g.as_str()) {
                Some(&j) => truth.push(j),
                None => return Err(Error::Data(format!("gene '{g}' missing from the report"))),
            }
        }
        let metrics = screening_metrics(&stats, &selected, &truth)?;
        println!("auprc={}", metrics.auprc);
        if !selected.is_empty() || report_has_selection(report_path)? {
            println!("power={}", metrics.power);
            println!("fdr={}", metrics.fdr);
        }
        printed = true;
    }
    if !printed {
        return Err(Error::Config(
            "evaluate needs --pred/--truth labels or --report/--truth-genes".into(),
        ));
    }
    Ok(())
}

fn report_has_selection(path: &std::path::Path) -> Result<bool> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .next()
        .map(|h| h.contains("selected"))
        .unwrap_or(false))
}

/// Read a per-gene report: (gene ids in file order, stats, selected indices).
fn read_report(path: &std::path::Path) -> Result<(Vec<String>, Vec<f64>, Vec<usize>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut gene_ids = Vec::new();
    let mut stats = Vec::new();
    let mut selected = Vec::new();
    let mut sel_col: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if idx == 0 {
            sel_col = fields.iter().position(|&f| f == "selected");
            continue;
        }
        if fields.len() < 2 {
            return Err(Error::Data(format!("line {}: malformed report row", idx + 1)));
        }
        gene_ids.push(fields[0].to_string());
        stats.push(
            fields[1]
                .parse()
                .map_err(|_| Error::Data(format!("line {}: bad statistic", idx + 1)))?,
        );
        if let Some(c) = sel_col {
            if fields.get(c) == Some(&"1") {
                selected.push(gene_ids.len() - 1);
            }
        }
    }
    Ok((gene_ids, stats, selected))
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn bench_cmd(args: BenchArgs) -> Result<()> {
    let (mut n, mut k, mut spec) = bench_scenario(&args.scenario)?;
    if let Some(v) = args.n {
        n = v;
    }
    if let Some(v) = args.k {
        k = v;
    }
    if let Some(v) = args.p {
        spec.p = v;
    }
    if let Some(v) = args.s {
        spec.s = v;
    }
    if args.reps == 0 {
        return Err(Error::Config("bench needs at least one replication".into()));
    }

    let run_all = || -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let layout = gen_layout(&LayoutSpec::SquareGrid { n, k })?;
        let space = AuxiliarySpace::Coordinates(layout.coords.clone());
        let mut powers = Vec::new();
        let mut fdrs = Vec::new();
        let mut aris = Vec::new();
        for rep in 0..args.reps {
            let mut rep_spec = spec.clone();
            rep_spec.seed = args.seed.wrapping_add(rep as u64);
            let (matrix, truth) = gen_expression(&layout, &rep_spec)?;
            let (matrix, _) = matrix.drop_zero_genes();
            let cfg = MmConfig {
                seed: rep_spec.seed,
                ..MmConfig::default()
            };
            let run = run_knockoff_filter(&matrix, &space, &cfg, args.q0, rep_spec.seed)?;
            if rep_spec.s > 0 {
                // gene indices survive zero-filtering via their id suffix
                let kept_truth: Vec<usize> = matrix
                    .gene_ids
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| {
                        g.strip_prefix("gene_")
                            .and_then(|s| s.parse::<usize>().ok())
                            .map(|orig| truth.contains(&orig))
                            .unwrap_or(false)
                    })
                    .map(|(j, _)| j)
                    .collect();
                let stats: Vec<f64> = run.orig.iter().map(|s| s.mm_stat).collect();
                let m = screening_metrics(&stats, &run.selected, &kept_truth)?;
                powers.push(m.power);
                fdrs.push(m.fdr);
            } else {
                let fdp = if run.selected.is_empty() { 0.0 } else { 1.0 };
                fdrs.push(fdp);
            }
            if args.cluster && !run.selected.is_empty() {
                let mut sel = Array2::zeros((matrix.n_spots(), run.selected.len()));
                for (c, &j) in run.selected.iter().enumerate() {
                    sel.column_mut(c).assign(&matrix.values.column(j));
                }
                let pca = pca_scores(&sel, 10)?;
                let res = kmeans(&pca.scores, k, rep_spec.seed, 10)?;
                aris.push(adjusted_rand(&res.labels, &layout.labels)?);
            }
        }
        Ok((powers, fdrs, aris))
    };

    let (powers, fdrs, aris) = match args.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(run_all)?
        }
        None => run_all()?,
    };

    println!(
        "scenario={} reps={} q0={} n={} k={} p={} s={}",
        args.scenario, args.reps, args.q0, n, k, spec.p, spec.s
    );
    println!("metric\tmean_x100\tsd_x100");
    if !powers.is_empty() {
        let (m, sd) = mean_sd(&powers);
        println!("power\t{:.1}\t{:.1}", m * 100.0, sd * 100.0);
    }
    let (m, sd) = mean_sd(&fdrs);
    println!("fdr\t{:.1}\t{:.1}", m * 100.0, sd * 100.0);
    if !aris.is_empty() {
        let (m, sd) = mean_sd(&aris);
        println!("ari\t{:.1}\t{:.1}", m * 100.0, sd * 100.0);
    }
    Ok(())
}
