//! End-to-end orchestration: load, screen, filter, cluster, report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::io::{
    self, load_coordinates, load_distance_matrix, load_matrix, ExpressionMatrix, MatrixFormat,
};
use crate::knockoff::{run_knockoff_filter, KnockoffRun};
use crate::mmtest::{screen_all, FeatureStatistic, MmConfig};
use crate::neighborhood::AuxiliarySpace;
use crate::postcluster::{kmeans, pca_scores};
use crate::qlik::VarianceModel;
use crate::simgen::{CountDistribution, SignalTier};

/// Environment variable consulted for the worker thread count when no
/// `--threads` flag is given.
pub const THREADS_ENV: &str = "MMSCREEN_THREADS";

/// Effective configuration of one pipeline run. Defaults follow the
/// method's canonical settings (beta 0.9, q0 0.05, ten principal
/// components).
#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub mm: MmConfig,
    pub q0: f64,
    pub d_pcs: usize,
    /// Post-selection clustering K; clustering is skipped when absent.
    pub k_clusters: Option<usize>,
    pub run_knockoff: bool,
    pub n_init: usize,
    pub matrix_path: PathBuf,
    pub matrix_format: MatrixFormat,
    pub coords_path: Option<PathBuf>,
    pub dist_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mm: MmConfig::default(),
            q0: 0.05,
            d_pcs: 10,
            k_clusters: None,
            run_knockoff: true,
            n_init: 10,
            matrix_path: PathBuf::new(),
            matrix_format: MatrixFormat::DenseDelimited,
            coords_path: None,
            dist_path: None,
            out_dir: PathBuf::new(),
            threads: None,
        }
    }
}

impl PipelineConfig {
    /// Apply one `key=value` setting (config file line or CLI override).
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("invalid {what} '{value}'"));
        match key {
            "matrix" => self.matrix_path = PathBuf::from(value),
            "format" => self.matrix_format = MatrixFormat::parse(value)?,
            "coords" => self.coords_path = Some(PathBuf::from(value)),
            "dist" => self.dist_path = Some(PathBuf::from(value)),
            "out" => self.out_dir = PathBuf::from(value),
            "model" => self.mm.model = VarianceModel::parse(value)?,
            "k_components" => {
                self.mm.k_components = value.parse().map_err(|_| bad("k_components"))?
            }
            "max_iters" => self.mm.max_iters = value.parse().map_err(|_| bad("max_iters"))?,
            "rel_tol" => self.mm.rel_tol = value.parse().map_err(|_| bad("rel_tol"))?,
            "seed" => self.mm.seed = value.parse().map_err(|_| bad("seed"))?,
            "beta" => self.mm.beta = value.parse().map_err(|_| bad("beta"))?,
            "m_phi" => self.mm.m_phi = value.parse().map_err(|_| bad("m_phi"))?,
            "mu_floor" => self.mm.mu_floor = value.parse().map_err(|_| bad("mu_floor"))?,
            "q0" => self.q0 = value.parse().map_err(|_| bad("q0"))?,
            "d_pcs" => self.d_pcs = value.parse().map_err(|_| bad("d_pcs"))?,
            "k_clusters" => self.k_clusters = Some(value.parse().map_err(|_| bad("k_clusters"))?),
            "knockoff" => self.run_knockoff = value.parse().map_err(|_| bad("knockoff"))?,
            "n_init" => self.n_init = value.parse().map_err(|_| bad("n_init"))?,
            "threads" => self.threads = Some(value.parse().map_err(|_| bad("threads"))?),
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    pub fn load_config_file(&mut self, path: &Path) -> Result<()> {
        for (k, v) in io::load_key_values(path)? {
            self.apply(&k, &v)?;
        }
        Ok(())
    }

    fn effective_threads(&self) -> Option<usize> {
        self.threads.or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.parse().ok())
        })
    }

    /// Every effective parameter, echoed into the run summary.
    fn echo(&self) -> Vec<(String, String)> {
        let mut pairs = vec![
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
            ("matrix".into(), self.matrix_path.display().to_string()),
            (
                "format".into(),
                match self.matrix_format {
                    MatrixFormat::DenseDelimited => "dense".into(),
                    MatrixFormat::SparseTriplet => "sparse".into(),
                },
            ),
        ];
        if let Some(c) = &self.coords_path {
            pairs.push(("coords".into(), c.display().to_string()));
        }
        if let Some(d) = &self.dist_path {
            pairs.push(("dist".into(), d.display().to_string()));
        }
        pairs.extend([
            ("out".into(), self.out_dir.display().to_string()),
            ("model".into(), self.mm.model.name().into()),
            ("k_components".into(), self.mm.k_components.to_string()),
            ("max_iters".into(), self.mm.max_iters.to_string()),
            ("rel_tol".into(), self.mm.rel_tol.to_string()),
            ("seed".into(), self.mm.seed.to_string()),
            ("beta".into(), self.mm.beta.to_string()),
            ("m_phi".into(), self.mm.m_phi.to_string()),
            ("mu_floor".into(), self.mm.mu_floor.to_string()),
            ("knockoff".into(), self.run_knockoff.to_string()),
            ("q0".into(), self.q0.to_string()),
            ("d_pcs".into(), self.d_pcs.to_string()),
            (
                "k_clusters".into(),
                self.k_clusters.map_or("none".into(), |k| k.to_string()),
            ),
            ("n_init".into(), self.n_init.to_string()),
            (
                "threads".into(),
                self.effective_threads()
                    .map_or("auto".into(), |t| t.to_string()),
            ),
        ]);
        pairs
    }
}

/// In-memory results of a pipeline run, alongside the files written.
#[derive(Debug)]
pub struct PipelineOutputs {
    pub stats: Vec<FeatureStatistic>,
    pub knockoff: Option<KnockoffRun>,
    pub cluster_labels: Option<Vec<usize>>,
    pub report_path: PathBuf,
    pub summary_path: PathBuf,
    pub labels_path: Option<PathBuf>,
    pub zero_genes_dropped: usize,
}

/// Build the auxiliary space from whichever of coords/dist is configured.
pub fn load_space(cfg: &PipelineConfig) -> Result<AuxiliarySpace> {
    match (&cfg.coords_path, &cfg.dist_path) {
        (Some(c), None) => Ok(AuxiliarySpace::Coordinates(load_coordinates(c)?)),
        (None, Some(d)) => Ok(AuxiliarySpace::Explicit(load_distance_matrix(d)?)),
        (Some(_), Some(_)) => Err(Error::Config(
            "give either coordinates or a distance matrix, not both".into(),
        )),
        (None, None) => Err(Error::Config(
            "auxiliary space missing: give --coords or --dist".into(),
        )),
    }
}

fn write_report(
    path: &Path,
    stats: &[FeatureStatistic],
    run: Option<&KnockoffRun>,
) -> Result<()> {
    use std::fmt::Write as _;
    // order by statistic, largest first; ties by original feature index
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats[b].mm_stat.total_cmp(&stats[a].mm_stat).then(a.cmp(&b)));

    let mut out = String::new();
    match run {
        Some(run) => {
            out.push_str("gene_id\tmm_stat\tknock_stat_scaled\tselected\n");
            let selected: std::collections::HashSet<usize> =
                run.selected.iter().copied().collect();
            for &j in &order {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    stats[j].feature_id,
                    stats[j].mm_stat,
                    run.knock_scaled[j],
                    u8::from(selected.contains(&j))
                );
            }
        }
        None => {
            out.push_str("gene_id\tmm_stat\n");
            for &j in &order {
                let _ = writeln!(out, "{}\t{}", stats[j].feature_id, stats[j].mm_stat);
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn run_inner(cfg: &PipelineConfig, matrix: &ExpressionMatrix) -> Result<PipelineOutputs> {
    let started = Instant::now();
    let space = load_space(cfg)?;
    let (matrix, dropped) = matrix.drop_zero_genes();
    if matrix.n_genes() == 0 {
        return Err(Error::Data("no non-zero genes left after filtering".into()));
    }

    let mut warnings: Vec<String> = Vec::new();
    let (stats, knock_run) = if cfg.run_knockoff {
        let run = run_knockoff_filter(&matrix, &space, &cfg.mm, cfg.q0, cfg.mm.seed)?;
        (run.orig.clone(), Some(run))
    } else {
        (screen_all(&matrix, &space, &cfg.mm)?, None)
    };

    // post-selection clustering on the selected genes
    let mut cluster_labels: Option<Vec<usize>> = None;
    let mut labels_path = None;
    if let (Some(k), Some(run)) = (cfg.k_clusters, knock_run.as_ref()) {
        if run.selected.is_empty() {
            warnings.push("clustering skipped: empty selection".into());
        } else {
            let mut sel = ndarray::Array2::zeros((matrix.n_spots(), run.selected.len()));
            for (c, &j) in run.selected.iter().enumerate() {
                sel.column_mut(c).assign(&matrix.values.column(j));
            }
            let pca = pca_scores(&sel, cfg.d_pcs)?;
            let res = kmeans(&pca.scores, k, cfg.mm.seed, cfg.n_init)?;
            let path = cfg.out_dir.join("labels.tsv");
            io::save_labels(&matrix.spot_ids, &res.labels, &path)?;
            cluster_labels = Some(res.labels);
            labels_path = Some(path);
        }
    }

    let report_path = cfg.out_dir.join("genes.tsv");
    write_report(&report_path, &stats, knock_run.as_ref())?;

    let mut summary = cfg.echo();
    summary.push(("n_spots".into(), matrix.n_spots().to_string()));
    summary.push(("n_genes_screened".into(), matrix.n_genes().to_string()));
    summary.push(("zero_genes_dropped".into(), dropped.to_string()));
    if let Some(run) = &knock_run {
        summary.push(("threshold".into(), run.threshold.to_string()));
        summary.push(("n_selected".into(), run.selected.len().to_string()));
    }
    for (i, w) in warnings.iter().enumerate() {
        summary.push((format!("warning_{i}"), w.clone()));
    }
    // timing is informational; reproducibility contracts exclude this line
    summary.push((
        "wall_time_s".into(),
        format!("{:.3}", started.elapsed().as_secs_f64()),
    ));
    let summary_path = cfg.out_dir.join("summary.txt");
    io::save_key_values(&summary, &summary_path)?;

    Ok(PipelineOutputs {
        stats,
        knockoff: knock_run,
        cluster_labels,
        report_path,
        summary_path,
        labels_path,
        zero_genes_dropped: dropped,
    })
}

/// Execute the configured pipeline: load the matrix, screen (optionally
/// with the knockoff filter), cluster the selected genes when requested,
/// and write the per-gene report, run summary, and optional labels file.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutputs> {
    cfg.mm.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let matrix = load_matrix(&cfg.matrix_path, cfg.matrix_format)?;
    match cfg.effective_threads() {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
            pool.install(|| run_inner(cfg, &matrix))
        }
        None => run_inner(cfg, &matrix),
    }
}

/// Preset generator scenarios used by `bench`.
pub fn bench_scenario(name: &str) -> Result<(usize, usize, crate::simgen::GenSpec)> {
    let mut spec = crate::simgen::GenSpec::default();
    match name {
        "layout1-high" => {
            spec.signal = SignalTier::High;
            Ok((900, 5, spec))
        }
        "layout1-low" => {
            spec.signal = SignalTier::Low;
            Ok((900, 5, spec))
        }
        "layout1-pln" => {
            spec.dist = CountDistribution::PoissonLogNormal;
            Ok((900, 5, spec))
        }
        "null" => {
            spec.s = 0;
            spec.p = 500;
            Ok((900, 5, spec))
        }
        other => Err(Error::Config(format!(
            "unknown scenario '{other}' (expected layout1-high, layout1-low, layout1-pln, null)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_through_pairs() {
        let mut cfg = PipelineConfig::default();
        cfg.apply("q0", "0.1").unwrap();
        cfg.apply("beta", "0.8").unwrap();
        cfg.apply("model", "quasi-poisson").unwrap();
        cfg.apply("k_clusters", "5").unwrap();
        cfg.apply("knockoff", "false").unwrap();
        assert_eq!(cfg.q0, 0.1);
        assert_eq!(cfg.mm.beta, 0.8);
        assert_eq!(cfg.mm.model.name(), "quasi-poisson");
        assert_eq!(cfg.k_clusters, Some(5));
        assert!(!cfg.run_knockoff);
        assert!(cfg.apply("nonsense", "1").is_err());
        assert!(cfg.apply("q0", "huh").is_err());
    }

    #[test]
    fn defaults_match_canonical_settings() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.mm.beta, 0.9);
        assert_eq!(cfg.q0, 0.05);
        assert_eq!(cfg.d_pcs, 10);
    }

    #[test]
    fn space_requires_exactly_one_source() {
        let mut cfg = PipelineConfig::default();
        assert!(matches!(load_space(&cfg), Err(Error::Config(_))));
        cfg.coords_path = Some("a".into());
        cfg.dist_path = Some("b".into());
        assert!(matches!(load_space(&cfg), Err(Error::Config(_))));
    }
}
