// compare fold patterns: single elevated domain vs paired up/down domains
use mmscreen::io::ExpressionMatrix;
use mmscreen::mmtest::MmConfig;
use mmscreen::neighborhood::AuxiliarySpace;
use mmscreen::simgen::*;
use ndarray::Array2;
use rand::Rng;
use rand_distr::Distribution;

fn gen(
    layout: &Layout,
    p: usize,
    s: usize,
    fold: f64,
    nb_size: f64,
    pln: Option<f64>,
    updown: bool,
    seed: u64,
) -> ExpressionMatrix {
    let n = layout.labels.len();
    let k = layout.k;
    let mut values = Array2::zeros((n, p));
    for j in 0..p {
        let mut rng = mmscreen::rng::stream(seed, 4, j as u64);
        for i in 0..n {
            let mut mean = 5.0;
            if j < s {
                let d = layout.labels[i];
                if d == j % k {
                    mean *= fold;
                } else if updown && d == (j + k / 2) % k {
                    mean /= fold;
                }
            }
            let value: f64 = match pln {
                None => {
                    let gamma = rand_distr::Gamma::new(nb_size, mean / nb_size).unwrap();
                    let draw: f64 = gamma.sample(&mut rng);
                    rand_distr::Poisson::new(draw.max(f64::MIN_POSITIVE))
                        .unwrap()
                        .sample(&mut rng)
                }
                Some(sigma) => {
                    let normal =
                        rand_distr::Normal::new(mean.ln() - 0.5 * sigma * sigma, sigma).unwrap();
                    let rate: f64 = normal.sample(&mut rng).exp();
                    rand_distr::Poisson::new(rate.max(f64::MIN_POSITIVE))
                        .unwrap()
                        .sample(&mut rng)
                }
            };
            let keep: f64 = rng.random();
            values[(i, j)] = if keep < 0.30 { 0.0 } else { value };
        }
    }
    ExpressionMatrix::new(
        values,
        (0..n).map(|i| format!("s{i}")).collect(),
        (0..p).map(|j| format!("g{j}")).collect(),
    )
    .unwrap()
}

fn main() {
    let layout = gen_layout(&LayoutSpec::SquareGrid { n: 900, k: 5 }).unwrap();
    let space = AuxiliarySpace::Coordinates(layout.coords.clone());
    let regimes: Vec<(&str, f64, Option<f64>)> = vec![
        ("nb2", 2.0, None),
        ("nb1", 1.0, None),
        ("pln0.5", 2.0, Some(0.5)),
        ("pln1.0", 2.0, Some(1.0)),
    ];
    for updown in [false, true] {
        for (name, nb_size, pln) in &regimes {
            for fold in [1.5f64, 2.0, 2.5] {
                let (mut mm_s, mut var_s) = (0.0, 0.0);
                let reps = 4;
                for rep in 0..reps {
                    let m = gen(&layout, 400, 40, fold, *nb_size, *pln, updown, 810 + rep);
                    let truth: Vec<usize> = (0..40).collect();
                    let cfg = MmConfig { seed: 810 + rep, ..MmConfig::default() };
                    let stats = mmscreen::mmtest::screen_all(&m, &space, &cfg).unwrap();
                    let mm: Vec<f64> = stats.iter().map(|s| s.mm_stat).collect();
                    let var: Vec<f64> = (0..m.n_genes())
                        .map(|j| {
                            let col = m.values.column(j);
                            let mean = col.sum() / col.len() as f64;
                            col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>()
                                / col.len() as f64
                        })
                        .collect();
                    mm_s += auprc(&mm, &truth).unwrap();
                    var_s += auprc(&var, &truth).unwrap();
                }
                println!(
                    "{} {name} fold={fold}: MM {:.3} VAR {:.3} gap {:+.3}",
                    if updown { "updown" } else { "up-only" },
                    mm_s / reps as f64,
                    var_s / reps as f64,
                    (mm_s - var_s) / reps as f64
                );
            }
        }
    }
}
