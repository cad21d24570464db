// inspect working-dispersion components for signal vs knockoff columns
use mmscreen::knockoff::generate_knockoffs;
use mmscreen::mmtest::MmConfig;
use mmscreen::neighborhood::{build_neighbors, working_dispersion, AuxiliarySpace};
use mmscreen::qlik::VarianceModel;
use mmscreen::simgen::*;

fn main() {
    let layout = gen_layout(&LayoutSpec::SquareGrid { n: 900, k: 5 }).unwrap();
    let space = AuxiliarySpace::Coordinates(layout.coords.clone());
    let nbr = build_neighbors(&space, 0.9).unwrap();
    let spec = GenSpec {
        p: 30,
        s: 10,
        seed: 400,
        ..GenSpec::default()
    };
    let (m, _) = gen_expression(&layout, &spec).unwrap();
    let knock = generate_knockoffs(&m, 400);
    let cfg = MmConfig { seed: 400, ..MmConfig::default() };

    println!("r_n = {}", nbr.r_n());
    for j in [0usize, 1, 2, 15, 16] {
        let col: Vec<f64> = m.values.column(j).iter().copied().collect();
        let d = working_dispersion(&col, &nbr, &VarianceModel::QuasiNegBinomial, 0.01, 1e-8)
            .unwrap();
        let stat = mmscreen::mmtest::mm_statistic(&col, &nbr, &cfg).unwrap();
        let kcol: Vec<f64> = knock.values.column(j).iter().copied().collect();
        let kd = working_dispersion(&kcol, &nbr, &VarianceModel::QuasiNegBinomial, 0.01, 1e-8)
            .unwrap();
        let kstat = mmscreen::mmtest::mm_statistic(&kcol, &nbr, &cfg).unwrap();
        println!(
            "col {j} ({}): phi0 {:.3} local {:.3} phi {:.3} stat {:.1} iters {} | knock: phi0 {:.3} local {:.3} phi {:.3} stat {:.1}",
            if j < 10 { "signal" } else { "null  " },
            d.phi0_hat, d.local_signal, d.phi_hat, stat.mm_stat, stat.iters_used,
            kd.phi0_hat, kd.local_signal, kd.phi_hat, kstat.mm_stat
        );
    }
}
