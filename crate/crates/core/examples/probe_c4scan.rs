// scan fold_high / dispersion for knockoff power at the high-signal tier
use mmscreen::knockoff::run_knockoff_filter;
use mmscreen::mmtest::MmConfig;
use mmscreen::neighborhood::AuxiliarySpace;
use mmscreen::simgen::*;

fn main() {
    let layout = gen_layout(&LayoutSpec::SquareGrid { n: 900, k: 5 }).unwrap();
    let space = AuxiliarySpace::Coordinates(layout.coords.clone());
    for nb_size in [2.0f64, 1.0] {
        for fold in [3.0f64, 4.0, 5.0, 6.0] {
            let mut power_sum = 0.0;
            let mut fdr_sum = 0.0;
            let reps = 3;
            for rep in 0..reps {
                let spec = GenSpec {
                    p: 2000,
                    s: 70,
                    nb_size,
                    fold_high: fold,
                    seed: 900 + rep,
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
                let cfg = MmConfig { seed: 900 + rep, ..MmConfig::default() };
                let run = run_knockoff_filter(&m, &space, &cfg, 0.05, 900 + rep).unwrap();
                let stats: Vec<f64> = run.orig.iter().map(|s| s.mm_stat).collect();
                let met = screening_metrics(&stats, &run.selected, &kept_truth).unwrap();
                power_sum += met.power;
                fdr_sum += met.fdr;
            }
            println!(
                "nb_size={nb_size} fold_high={fold}: power {:.3} fdr {:.3}",
                power_sum / reps as f64,
                fdr_sum / reps as f64
            );
        }
    }
}
