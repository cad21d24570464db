//! Synthetic spatial count data and screening metrics.
//!
//! The generator reproduces a square-grid geometry split into equal
//! vertical bands of spots ("domains"). Relevant feature `j` is elevated in
//! domain `j mod K` by the signal-tier fold; irrelevant features share one
//! mean everywhere. Counts come from a negative binomial (gamma-Poisson)
//! or Poisson log-normal draw, then entries are independently zeroed at the
//! requested rate. Every feature owns a `(seed, sim, feature)` stream, so
//! matrices are reproducible entry for entry.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::ExpressionMatrix;
use crate::rng::{stream, PURPOSE_SIM};

/// Spot geometry plus ground-truth domain labels.
#[derive(Clone, Debug)]
pub struct Layout {
    /// n x 2 coordinates.
    pub coords: Array2<f64>,
    /// Domain label per spot, in [0, k).
    pub labels: Vec<usize>,
    pub k: usize,
}

/// How to produce a layout.
#[derive(Clone, Debug)]
pub enum LayoutSpec {
    /// Unit-spaced `side x side` grid (n a perfect square) split into `k`
    /// equal-width vertical bands.
    SquareGrid { n: usize, k: usize },
    /// Verbatim coordinates and labels, e.g. loaded from files.
    FromFile { coords: Array2<f64>, labels: Vec<usize> },
}

pub fn gen_layout(spec: &LayoutSpec) -> Result<Layout> {
    match spec {
        LayoutSpec::SquareGrid { n, k } => {
            let side = (*n as f64).sqrt().round() as usize;
            if side * side != *n {
                return Err(Error::Config(format!("{n} spots do not form a square grid")));
            }
            if *k == 0 || !side.is_multiple_of(*k) {
                return Err(Error::Config(format!(
                    "side {side} is not divisible into {k} equal bands"
                )));
            }
            let band = side / k;
            let mut coords = Array2::zeros((*n, 2));
            let mut labels = Vec::with_capacity(*n);
            for x in 0..side {
                for y in 0..side {
                    let i = x * side + y;
                    coords[(i, 0)] = x as f64;
                    coords[(i, 1)] = y as f64;
                    labels.push(x / band);
                }
            }
            Ok(Layout {
                coords,
                labels,
                k: *k,
            })
        }
        LayoutSpec::FromFile { coords, labels } => {
            if coords.nrows() != labels.len() {
                return Err(Error::Config(format!(
                    "{} coordinate rows but {} labels",
                    coords.nrows(),
                    labels.len()
                )));
            }
            if labels.is_empty() {
                return Err(Error::Config("layout has no spots".into()));
            }
            let k = labels.iter().max().unwrap() + 1;
            Ok(Layout {
                coords: coords.clone(),
                labels: labels.clone(),
                k,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CountDistribution {
    NegBinomial,
    PoissonLogNormal,
}

impl CountDistribution {
    pub fn name(&self) -> &'static str {
        match self {
            CountDistribution::NegBinomial => "nb",
            CountDistribution::PoissonLogNormal => "pln",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nb" => Ok(CountDistribution::NegBinomial),
            "pln" => Ok(CountDistribution::PoissonLogNormal),
            other => Err(Error::Config(format!(
                "unknown distribution '{other}' (expected nb or pln)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalTier {
    High,
    Low,
}

impl SignalTier {
    pub fn name(&self) -> &'static str {
        match self {
            SignalTier::High => "high",
            SignalTier::Low => "low",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "high" => Ok(SignalTier::High),
            "low" => Ok(SignalTier::Low),
            other => Err(Error::Config(format!(
                "unknown signal tier '{other}' (expected high or low)"
            ))),
        }
    }
}

/// Generator parameters. Features `0..s` are relevant.
#[derive(Clone, Debug)]
pub struct GenSpec {
    pub p: usize,
    pub s: usize,
    pub dist: CountDistribution,
    pub signal: SignalTier,
    /// Probability that an entry is zeroed after drawing.
    pub zero_rate: f64,
    pub base_mean: f64,
    /// Negative binomial shape (variance = mean + mean^2 / nb_size).
    pub nb_size: f64,
    /// Log-scale standard deviation of the Poisson log-normal rate.
    pub pln_sigma: f64,
    pub fold_high: f64,
    pub fold_low: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            p: 3000,
            s: 100,
            dist: CountDistribution::NegBinomial,
            signal: SignalTier::High,
            zero_rate: 0.30,
            base_mean: 5.0,
            nb_size: 2.0,
            pln_sigma: 0.5,
            fold_high: 3.0,
            fold_low: 1.5,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.s > self.p {
            return Err(Error::Config(format!(
                "relevant count {} exceeds feature count {}",
                self.s, self.p
            )));
        }
        if !(0.0..=1.0).contains(&self.zero_rate) {
            return Err(Error::Config(format!(
                "zero_rate must lie in [0, 1], got {}",
                self.zero_rate
            )));
        }
        for (name, v) in [
            ("base_mean", self.base_mean),
            ("nb_size", self.nb_size),
            ("pln_sigma", self.pln_sigma),
            ("fold_high", self.fold_high),
            ("fold_low", self.fold_low),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn fold(&self) -> f64 {
        match self.signal {
            SignalTier::High => self.fold_high,
            SignalTier::Low => self.fold_low,
        }
    }

    /// Manifest lines recording every generator field.
    pub fn manifest(&self, layout: &Layout) -> Vec<(String, String)> {
        vec![
            ("n".into(), layout.labels.len().to_string()),
            ("k_domains".into(), layout.k.to_string()),
            ("p".into(), self.p.to_string()),
            ("s".into(), self.s.to_string()),
            ("dist".into(), self.dist.name().into()),
            ("signal".into(), self.signal.name().into()),
            ("zero_rate".into(), self.zero_rate.to_string()),
            ("base_mean".into(), self.base_mean.to_string()),
            ("nb_size".into(), self.nb_size.to_string()),
            ("pln_sigma".into(), self.pln_sigma.to_string()),
            ("fold_high".into(), self.fold_high.to_string()),
            ("fold_low".into(), self.fold_low.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("rng".into(), "chacha8/splitmix64 streams".into()),
        ]
    }
}

fn draw_nb(rng: &mut ChaCha8Rng, mean: f64, size: f64) -> f64 {
    let gamma = rand_distr::Gamma::new(size, mean / size).expect("valid gamma parameters");
    let rate: f64 = gamma.sample(rng);
    let rate = rate.max(f64::MIN_POSITIVE);
    rand_distr::Poisson::new(rate).expect("valid rate").sample(rng)
}

fn draw_pln(rng: &mut ChaCha8Rng, mean: f64, sigma: f64) -> f64 {
    let normal = rand_distr::Normal::new(mean.ln() - 0.5 * sigma * sigma, sigma)
        .expect("valid normal parameters");
    let rate: f64 = normal.sample(rng).exp().max(f64::MIN_POSITIVE);
    rand_distr::Poisson::new(rate).expect("valid rate").sample(rng)
}

/// Generate a matrix over the layout. Returns the matrix and the relevant
/// feature indices `0..s`.
pub fn gen_expression(layout: &Layout, spec: &GenSpec) -> Result<(ExpressionMatrix, Vec<usize>)> {
    spec.validate()?;
    let n = layout.labels.len();
    let fold = spec.fold();

    let columns: Vec<Vec<f64>> = (0..spec.p)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream(spec.seed, PURPOSE_SIM, j as u64);
            let marked_domain = if j < spec.s { Some(j % layout.k) } else { None };
            (0..n)
                .map(|i| {
                    let mean = match marked_domain {
                        Some(d) if layout.labels[i] == d => spec.base_mean * fold,
                        _ => spec.base_mean,
                    };
                    // one value draw, then one zero-mask draw per entry
                    let value = match spec.dist {
                        CountDistribution::NegBinomial => draw_nb(&mut rng, mean, spec.nb_size),
                        CountDistribution::PoissonLogNormal => {
                            draw_pln(&mut rng, mean, spec.pln_sigma)
                        }
                    };
                    let keep: f64 = rng.random();
                    if keep < spec.zero_rate {
                        0.0
                    } else {
                        value
                    }
                })
                .collect()
        })
        .collect();

    let mut values = Array2::zeros((n, spec.p));
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    let m = ExpressionMatrix {
        values,
        spot_ids: (0..n).map(|i| format!("spot_{i}")).collect(),
        gene_ids: (0..spec.p).map(|j| format!("gene_{j}")).collect(),
    };
    Ok((m, (0..spec.s).collect()))
}

/// Screening quality relative to a ground-truth relevant set.
#[derive(Clone, Copy, Debug)]
pub struct ScreeningMetrics {
    /// Selected true positives over all true positives.
    pub power: f64,
    /// False selections over selections (0 when nothing is selected).
    pub fdr: f64,
    /// Area under the precision-recall step curve of the statistic ranking.
    pub auprc: f64,
}

/// Step-integrated area under precision-recall for a statistic ranking;
/// ties broken by ascending feature index.
pub fn auprc(stats: &[f64], truth: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Config("truth set is empty: power/AUPRC undefined".into()));
    }
    let is_true: Vec<bool> = {
        let mut v = vec![false; stats.len()];
        for &t in truth {
            if t >= stats.len() {
                return Err(Error::Config(format!(
                    "truth index {t} out of range for {} features",
                    stats.len()
                )));
            }
            v[t] = true;
        }
        v
    };
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&a, &b| stats[b].total_cmp(&stats[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut area = 0.0;
    for (rank, &j) in order.iter().enumerate() {
        if is_true[j] {
            hits += 1;
            area += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(area / truth.len() as f64)
}

/// Power, FDR, and AUPRC of a screen given the statistics, the selected
/// set, and the ground-truth relevant set.
pub fn screening_metrics(
    stats: &[f64],
    selected: &[usize],
    truth: &[usize],
) -> Result<ScreeningMetrics> {
    let auprc = auprc(stats, truth)?;
    let truth_set: std::collections::HashSet<usize> = truth.iter().copied().collect();
    let tp = selected.iter().filter(|j| truth_set.contains(j)).count();
    let power = tp as f64 / truth.len() as f64;
    let fdr = (selected.len() - tp) as f64 / selected.len().max(1) as f64;
    Ok(ScreeningMetrics { power, fdr, auprc })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_grid_layout_shapes() {
        let layout = gen_layout(&LayoutSpec::SquareGrid { n: 900, k: 5 }).unwrap();
        assert_eq!(layout.labels.len(), 900);
        for d in 0..5 {
            assert_eq!(layout.labels.iter().filter(|&&l| l == d).count(), 180);
        }
        // bands follow the x coordinate
        for i in 0..900 {
            assert_eq!(layout.labels[i], (layout.coords[(i, 0)] as usize) / 6);
        }

        let small = gen_layout(&LayoutSpec::SquareGrid { n: 4, k: 2 }).unwrap();
        assert_eq!(small.labels, vec![0, 0, 1, 1]);

        assert!(gen_layout(&LayoutSpec::SquareGrid { n: 10, k: 2 }).is_err());
        assert!(gen_layout(&LayoutSpec::SquareGrid { n: 900, k: 7 }).is_err());
    }

    #[test]
    fn from_file_layout_is_verbatim() {
        let layout = gen_layout(&LayoutSpec::SquareGrid { n: 16, k: 2 }).unwrap();
        let again = gen_layout(&LayoutSpec::FromFile {
            coords: layout.coords.clone(),
            labels: layout.labels.clone(),
        })
        .unwrap();
        assert_eq!(again.coords, layout.coords);
        assert_eq!(again.labels, layout.labels);
        assert_eq!(again.k, 2);
    }

    #[test]
    fn zero_rate_one_gives_all_zero_matrix() {
        let layout = gen_layout(&LayoutSpec::SquareGrid { n: 16, k: 2 }).unwrap();
        let spec = GenSpec {
            p: 5,
            s: 2,
            zero_rate: 1.0,
            ..GenSpec::default()
        };
        let (m, truth) = gen_expression(&layout, &spec).unwrap();
        assert!(m.values.iter().all(|&v| v == 0.0));
        assert_eq!(truth, vec![0, 1]);
    }

    #[test]
    fn generator_is_deterministic() {
        let layout = gen_layout(&LayoutSpec::SquareGrid { n: 36, k: 2 }).unwrap();
        let spec = GenSpec {
            p: 8,
            s: 3,
            seed: 42,
            ..GenSpec::default()
        };
        let (a, _) = gen_expression(&layout, &spec).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| gen_expression(&layout, &spec).unwrap().0)
        };
        assert_eq!(a.values, run(1).values);
        assert_eq!(a.values, run(8).values);
    }

    #[test]
    fn unit_fold_makes_relevant_indistinguishable() {
        // fold = 1: relevant and irrelevant columns share one distribution;
        // two-sample KS on pooled values must not reject at 1%
        let layout = gen_layout(&LayoutSpec::SquareGrid { n: 100, k: 2 }).unwrap();
        for seed in 0..20u64 {
            let spec = GenSpec {
                p: 40,
                s: 20,
                fold_high: 1.0,
                seed,
                zero_rate: 0.3,
                ..GenSpec::default()
            };
            let (m, _) = gen_expression(&layout, &spec).unwrap();
            let mut a: Vec<f64> = Vec::new();
            let mut b: Vec<f64> = Vec::new();
            for j in 0..40 {
                let col = m.values.column(j);
                if j < 20 {
                    a.extend(col.iter());
                } else {
                    b.extend(col.iter());
                }
            }
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            // tie-aware KS: advance both samples through each distinct value
            let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
            while i < a.len() && j < b.len() {
                let v = a[i].min(b[j]);
                while i < a.len() && a[i] == v {
                    i += 1;
                }
                while j < b.len() && b[j] == v {
                    j += 1;
                }
                d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
            }
            let critical = 1.628 * ((a.len() + b.len()) as f64 / (a.len() * b.len()) as f64).sqrt();
            assert!(d < critical, "seed {seed}: KS {d} >= {critical}");
        }
    }

    #[test]
    fn relevant_features_recover_fold_pattern() {
        let layout = gen_layout(&LayoutSpec::SquareGrid { n: 900, k: 5 }).unwrap();
        let spec = GenSpec {
            p: 25,
            s: 25,
            seed: 3,
            ..GenSpec::default()
        };
        let (m, _) = gen_expression(&layout, &spec).unwrap();
        // feature j is elevated in domain j mod 5; after zero-inflation the
        // expected mean is (1 - zero_rate) * base * fold^delta; average the
        // five features sharing each assigned domain
        for assigned in 0..5usize {
            let features: Vec<usize> = (0..25).filter(|j| j % 5 == assigned).collect();
            for d in 0..5 {
                let spots: Vec<usize> = (0..900).filter(|&i| layout.labels[i] == d).collect();
                let mean: f64 = features
                    .iter()
                    .map(|&j| {
                        spots.iter().map(|&i| m.values[(i, j)]).sum::<f64>() / spots.len() as f64
                    })
                    .sum::<f64>()
                    / features.len() as f64;
                let expect = 0.7 * 5.0 * if d == assigned { 3.0 } else { 1.0 };
                assert!(
                    (mean - expect).abs() / expect < 0.10,
                    "assigned {assigned} domain {d}: mean {mean} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn nb_moments_match() {
        let mut rng = crate::rng::stream(1, 90, 0);
        let n = 100_000;
        let (mean, size) = (5.0, 2.0);
        let draws: Vec<f64> = (0..n).map(|_| draw_nb(&mut rng, mean, size)).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let v = draws.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        assert!((m - mean).abs() / mean < 0.03, "mean {m}");
        let expect_var = mean + mean * mean / size;
        assert!((v - expect_var).abs() / expect_var < 0.03, "var {v} vs {expect_var}");
    }

    #[test]
    fn pln_mean_matches() {
        let mut rng = crate::rng::stream(2, 90, 0);
        let n = 100_000;
        let (mean, sigma) = (5.0, 0.5);
        let draws: Vec<f64> = (0..n).map(|_| draw_pln(&mut rng, mean, sigma)).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        assert!((m - mean).abs() / mean < 0.03, "mean {m}");
    }

    #[test]
    fn zero_inflation_rate_matches() {
        // huge base mean: natural zeros vanish, so the observed zero
        // fraction is the mask rate
        let layout = gen_layout(&LayoutSpec::SquareGrid { n: 400, k: 2 }).unwrap();
        let spec = GenSpec {
            p: 300,
            s: 0,
            base_mean: 1000.0,
            zero_rate: 0.30,
            seed: 5,
            ..GenSpec::default()
        };
        let (m, _) = gen_expression(&layout, &spec).unwrap();
        let total = m.values.len() as f64;
        assert!(total >= 1e5);
        let zeros = m.values.iter().filter(|&&v| v == 0.0).count() as f64;
        let frac = zeros / total;
        assert!((frac - 0.30).abs() / 0.30 < 0.02, "zero fraction {frac}");
    }

    #[test]
    fn auprc_hand_checks() {
        // perfect ranking
        let a = auprc(&[0.9, 0.8, 0.3, 0.1], &[0, 1]).unwrap();
        assert_eq!(a, 1.0);
        // worked example: hits at ranks 1 and 3
        let a = auprc(&[0.9, 0.8, 0.3, 0.1], &[0, 2]).unwrap();
        assert!((a - 5.0 / 6.0).abs() < 1e-15);
        assert!(auprc(&[1.0, 2.0], &[]).is_err());
    }

    #[test]
    fn auprc_breaks_ties_by_index() {
        // equal stats: relevant feature 2 is ranked after 0 and 1
        let a = auprc(&[1.0, 1.0, 1.0], &[2]).unwrap();
        assert!((a - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn metrics_on_exact_selection() {
        let m = screening_metrics(&[3.0, 2.0, 1.0, 0.5], &[0, 1], &[0, 1]).unwrap();
        assert_eq!(m.power, 1.0);
        assert_eq!(m.fdr, 0.0);
        assert_eq!(m.auprc, 1.0);

        let m = screening_metrics(&[3.0, 2.0, 1.0, 0.5], &[], &[0, 1]).unwrap();
        assert_eq!(m.power, 0.0);
        assert_eq!(m.fdr, 0.0);

        let m = screening_metrics(&[3.0, 2.0, 1.0, 0.5], &[0, 2, 3], &[0, 1]).unwrap();
        assert_eq!(m.power, 0.5);
        assert!((m.fdr - 2.0 / 3.0).abs() < 1e-15);
    }
}
