use mmscreen::mmtest::{mm_statistic, MmConfig};
use mmscreen::neighborhood::{build_neighbors, AuxiliarySpace};
use mmscreen::simgen::*;

fn main() {
    let layout = gen_layout(&LayoutSpec::SquareGrid { n: 900, k: 5 }).unwrap();
    let space = AuxiliarySpace::Coordinates(layout.coords.clone());
    let nbr = build_neighbors(&space, 0.9).unwrap();
    let spec = GenSpec { p: 6, s: 3, signal: SignalTier::Low, fold_low: 2.0, seed: 700, ..GenSpec::default() };
    let (m, _) = gen_expression(&layout, &spec).unwrap();
    for j in 0..6 {
        let col: Vec<f64> = m.values.column(j).iter().copied().collect();
        for k in [2usize, 3, 4] {
            let cfg = MmConfig { seed: 700, k_components: k, ..MmConfig::default() };
            let s = mm_statistic(&col, &nbr, &cfg).unwrap();
            print!("col{j} K{k}: stat {:.4} iters {} | ", s.mm_stat, s.iters_used);
        }
        println!();
    }
}
