//! Resampling knockoffs and the data-adaptive selection threshold.
//!
//! Each feature's knockoff is a bootstrap resample of its own values, so
//! knockoffs preserve marginal distributions while destroying any relation
//! to the spatial layout. Screening the augmented matrix prices the null:
//! the threshold is the smallest candidate at which scaled knockoff
//! exceedances stay within the target fraction of original exceedances.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::ExpressionMatrix;
use crate::mmtest::{statistics_for_columns, FeatureStatistic, MmConfig};
use crate::neighborhood::{build_neighbors, AuxiliarySpace};
use crate::rng::{stream, PURPOSE_KNOCKOFF_GEN, PURPOSE_KNOCKOFF_MM, PURPOSE_MM};

/// Outcome of one knockoff-filtered screen.
#[derive(Clone, Debug)]
pub struct KnockoffRun {
    pub q0: f64,
    pub seed: u64,
    /// Per-feature statistics of the original columns.
    pub orig: Vec<FeatureStatistic>,
    /// Raw knockoff-column statistics, index-aligned with `orig`.
    pub knock_raw: Vec<f64>,
    /// Knockoff statistics after the `1 + 1/ln(n)` inflation.
    pub knock_scaled: Vec<f64>,
    /// Selection threshold; `+inf` when no candidate satisfies the bound.
    pub threshold: f64,
    /// Indices of features with `mm_stat >= threshold`.
    pub selected: Vec<usize>,
}

/// Bootstrap-resample every column. Column `j` draws from the stream keyed
/// by `(seed, knockoff-generation, j)`, so knockoffs are independent of any
/// other randomness in the run.
pub fn generate_knockoffs(x: &ExpressionMatrix, seed: u64) -> ExpressionMatrix {
    let n = x.n_spots();
    let p = x.n_genes();
    let columns: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(seed, PURPOSE_KNOCKOFF_GEN, j as u64);
            let col = x.values.column(j);
            (0..n).map(|_| col[rng.random_range(0..n)]).collect()
        })
        .collect();
    let mut values = Array2::zeros((n, p));
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    ExpressionMatrix {
        values,
        spot_ids: x.spot_ids.clone(),
        gene_ids: x.gene_ids.iter().map(|g| format!("{g}~knockoff")).collect(),
    }
}

/// Inflate raw knockoff statistics by `1 + 1/ln(n)` (natural logarithm).
pub fn scaled_knockoff_stats(knock_raw: &[f64], n: usize) -> Result<Vec<f64>> {
    if n < 3 {
        return Err(Error::Config(format!(
            "knockoff scaling needs n >= 3 spots, got {n}"
        )));
    }
    let factor = 1.0 + 1.0 / (n as f64).ln();
    Ok(knock_raw.iter().map(|&v| factor * v).collect())
}

/// Smallest candidate threshold `h` (over unique nonzero absolute original
/// statistics) with
/// `#{j: knock_scaled[j] >= h} / max(#{j: orig[j] >= h}, 1) <= q0`,
/// or `+inf` when none qualifies.
pub fn knockoff_threshold(orig: &[f64], knock_scaled: &[f64], q0: f64) -> Result<f64> {
    if !(q0 > 0.0 && q0 < 1.0) {
        return Err(Error::Config(format!("q0 must lie in (0, 1), got {q0}")));
    }
    let mut candidates: Vec<f64> = orig
        .iter()
        .map(|&v| v.abs())
        .filter(|&a| a > 0.0)
        .collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    for &h in &candidates {
        let knock_hits = knock_scaled.iter().filter(|&&v| v >= h).count();
        let orig_hits = orig.iter().filter(|&&v| v >= h).count().max(1);
        if knock_hits as f64 / orig_hits as f64 <= q0 {
            return Ok(h);
        }
    }
    Ok(f64::INFINITY)
}

/// Screen the augmented `[X, knockoff(X)]` matrix with one shared neighbor
/// index, then select features at the knockoff threshold.
pub fn run_knockoff_filter(
    x: &ExpressionMatrix,
    space: &AuxiliarySpace,
    cfg: &MmConfig,
    q0: f64,
    seed: u64,
) -> Result<KnockoffRun> {
    cfg.validate()?;
    if !(q0 > 0.0 && q0 < 1.0) {
        return Err(Error::Config(format!("q0 must lie in (0, 1), got {q0}")));
    }
    if space.n_spots() != x.n_spots() {
        return Err(Error::Config(format!(
            "auxiliary space has {} spots but matrix has {}",
            space.n_spots(),
            x.n_spots()
        )));
    }
    let nbr = build_neighbors(space, cfg.beta)?;
    let knock = generate_knockoffs(x, seed);

    let orig = statistics_for_columns(x.values.view(), &x.gene_ids, &nbr, cfg, PURPOSE_MM)?;
    let knock_stats = statistics_for_columns(
        knock.values.view(),
        &knock.gene_ids,
        &nbr,
        cfg,
        PURPOSE_KNOCKOFF_MM,
    )?;

    let orig_vals: Vec<f64> = orig.iter().map(|s| s.mm_stat).collect();
    let knock_raw: Vec<f64> = knock_stats.iter().map(|s| s.mm_stat).collect();
    let knock_scaled = scaled_knockoff_stats(&knock_raw, x.n_spots())?;
    let threshold = knockoff_threshold(&orig_vals, &knock_scaled, q0)?;
    let selected: Vec<usize> = if threshold.is_finite() {
        (0..orig_vals.len())
            .filter(|&j| orig_vals[j] >= threshold)
            .collect()
    } else {
        Vec::new()
    };

    Ok(KnockoffRun {
        q0,
        seed,
        orig,
        knock_raw,
        knock_scaled,
        threshold,
        selected,
    })
}
