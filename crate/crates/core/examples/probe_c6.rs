// scan generator regimes for the low-signal MM-vs-variance AUPRC gap
use mmscreen::mmtest::MmConfig;
use mmscreen::neighborhood::AuxiliarySpace;
use mmscreen::simgen::*;

fn main() {
    let layout = gen_layout(&LayoutSpec::SquareGrid { n: 900, k: 5 }).unwrap();
    let space = AuxiliarySpace::Coordinates(layout.coords.clone());
    let configs: Vec<(&str, CountDistribution, f64, f64)> = vec![
        ("nb size2", CountDistribution::NegBinomial, 2.0, 0.5),
        ("nb size1", CountDistribution::NegBinomial, 1.0, 0.5),
        ("nb size.5", CountDistribution::NegBinomial, 0.5, 0.5),
        ("pln s0.5", CountDistribution::PoissonLogNormal, 2.0, 0.5),
        ("pln s1.0", CountDistribution::PoissonLogNormal, 2.0, 1.0),
        ("pln s1.3", CountDistribution::PoissonLogNormal, 2.0, 1.3),
    ];
    for (name, dist, nb_size, pln_sigma) in configs {
        for fold in [1.5f64, 2.0, 2.5, 3.0] {
            let mut mm_sum = 0.0;
            let mut var_sum = 0.0;
            let reps = 4;
            for rep in 0..reps {
                let spec = GenSpec {
                    p: 400,
                    s: 40,
                    dist,
                    nb_size,
                    pln_sigma,
                    signal: SignalTier::Low,
                    fold_low: fold,
                    seed: 800 + rep,
                    ..GenSpec::default()
                };
                let (m, truth) = gen_expression(&layout, &spec).unwrap();
                let (m, _) = m.drop_zero_genes();
                let kept_truth: Vec<usize> = m
                    .gene_ids
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| {
                        g.strip_prefix("gene_")
                            .and_then(|s| s.parse::<usize>().ok())
                            .map(|o| truth.contains(&o))
                            .unwrap_or(false)
                    })
                    .map(|(j, _)| j)
                    .collect();
                let cfg = MmConfig { seed: 800 + rep, ..MmConfig::default() };
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
                mm_sum += auprc(&mm, &kept_truth).unwrap();
                var_sum += auprc(&var, &kept_truth).unwrap();
            }
            println!(
                "{name} fold={fold}: MM {:.3} VAR {:.3} gap {:+.3}",
                mm_sum / reps as f64,
                var_sum / reps as f64,
                (mm_sum - var_sum) / reps as f64
            );
        }
    }
}
