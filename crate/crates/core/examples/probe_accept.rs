// scratch probe for acceptance-criterion magnitudes and runtimes
use std::time::Instant;

use mmscreen::knockoff::run_knockoff_filter;
use mmscreen::mmtest::MmConfig;
use mmscreen::neighborhood::AuxiliarySpace;
use mmscreen::postcluster::{adjusted_rand, kmeans, pca_scores};
use mmscreen::simgen::*;
use ndarray::Array2;

fn main() {
    let which: String = std::env::args().nth(1).unwrap_or_else(|| "c4".into());
    match which.as_str() {
        "c3" => c3(),
        "c4" => c45(),
        "c6" => c6(),
        _ => eprintln!("unknown probe"),
    }
}

fn c3() {
    let layout = gen_layout(&LayoutSpec::SquareGrid { n: 900, k: 5 }).unwrap();
    let space = AuxiliarySpace::Coordinates(layout.coords.clone());
    let started = Instant::now();
    let mut fdps = Vec::new();
    let mut sizes = Vec::new();
    for rep in 0..50u64 {
        let spec = GenSpec {
            p: 500,
            s: 0,
            seed: 300 + rep,
            ..GenSpec::default()
        };
        let (m, _) = gen_expression(&layout, &spec).unwrap();
        let (m, _) = m.drop_zero_genes();
        let cfg = MmConfig { seed: 300 + rep, ..MmConfig::default() };
        let run = run_knockoff_filter(&m, &space, &cfg, 0.1, 300 + rep).unwrap();
        let fdp = if run.selected.is_empty() { 0.0 } else { 1.0 };
        fdps.push(fdp);
        sizes.push(run.selected.len());
        if rep % 10 == 9 {
            eprintln!("  rep {rep}: elapsed {:?}", started.elapsed());
        }
    }
    let mean_fdp: f64 = fdps.iter().sum::<f64>() / 50.0;
    let small = sizes.iter().filter(|&&s| s <= 5).count();
    println!(
        "c3: mean FDP {mean_fdp} | runs selecting <=5: {small}/50 | sizes {:?} | total {:?}",
        sizes,
        started.elapsed()
    );
}

fn c45() {
    let layout = gen_layout(&LayoutSpec::SquareGrid { n: 900, k: 5 }).unwrap();
    let space = AuxiliarySpace::Coordinates(layout.coords.clone());
    let started = Instant::now();
    let mut powers = Vec::new();
    let mut fdrs = Vec::new();
    let mut aris = Vec::new();
    for rep in 0..20u64 {
        let spec = GenSpec {
            p: 3000,
            s: 100,
            seed: 400 + rep,
            ..GenSpec::default()
        };
        let (m, truth) = gen_expression(&layout, &spec).unwrap();
        let (m, dropped) = m.drop_zero_genes();
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
        let cfg = MmConfig { seed: 400 + rep, ..MmConfig::default() };
        let run = run_knockoff_filter(&m, &space, &cfg, 0.05, 400 + rep).unwrap();
        let stats: Vec<f64> = run.orig.iter().map(|s| s.mm_stat).collect();
        let met = screening_metrics(&stats, &run.selected, &kept_truth).unwrap();
        powers.push(met.power);
        fdrs.push(met.fdr);

        let mut sel = Array2::zeros((m.n_spots(), run.selected.len().max(1)));
        for (c, &j) in run.selected.iter().enumerate() {
            sel.column_mut(c).assign(&m.values.column(j));
        }
        let ari = if run.selected.is_empty() {
            f64::NAN
        } else {
            let pca = pca_scores(&sel, 10).unwrap();
            let res = kmeans(&pca.scores, 5, 400 + rep, 10).unwrap();
            adjusted_rand(&res.labels, &layout.labels).unwrap()
        };
        aris.push(ari);
        eprintln!(
            "  rep {rep}: dropped {dropped} power {:.3} fdr {:.3} ari {:.3} sel {} thr {:.2} elapsed {:?}",
            met.power,
            met.fdr,
            ari,
            run.selected.len(),
            run.threshold,
            started.elapsed()
        );
    }
    let mp: f64 = powers.iter().sum::<f64>() / 20.0;
    let mf: f64 = fdrs.iter().sum::<f64>() / 20.0;
    let ma: f64 = aris.iter().sum::<f64>() / 20.0;
    println!("c4/c5: mean power {mp:.4} mean fdr {mf:.4} mean ari {ma:.4} total {:?}", started.elapsed());
}

fn c6() {
    let layout = gen_layout(&LayoutSpec::SquareGrid { n: 900, k: 5 }).unwrap();
    let space = AuxiliarySpace::Coordinates(layout.coords.clone());
    let started = Instant::now();
    let mut mm_auprcs = Vec::new();
    let mut var_auprcs = Vec::new();
    for rep in 0..20u64 {
        let spec = GenSpec {
            p: 1000,
            s: 100,
            signal: SignalTier::Low,
            seed: 600 + rep,
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
        let cfg = MmConfig { seed: 600 + rep, ..MmConfig::default() };
        let stats = mmscreen::mmtest::screen_all(&m, &space, &cfg).unwrap();
        let mm_stats: Vec<f64> = stats.iter().map(|s| s.mm_stat).collect();
        let var_stats: Vec<f64> = (0..m.n_genes())
            .map(|j| {
                let col = m.values.column(j);
                let mean = col.sum() / col.len() as f64;
                col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / col.len() as f64
            })
            .collect();
        let a = auprc(&mm_stats, &kept_truth).unwrap();
        let b = auprc(&var_stats, &kept_truth).unwrap();
        mm_auprcs.push(a);
        var_auprcs.push(b);
        eprintln!("  rep {rep}: mm {a:.3} var {b:.3} elapsed {:?}", started.elapsed());
    }
    let ma: f64 = mm_auprcs.iter().sum::<f64>() / 20.0;
    let mv: f64 = var_auprcs.iter().sum::<f64>() / 20.0;
    println!("c6: mean MM AUPRC {ma:.4} mean variance AUPRC {mv:.4} gap {:.4} total {:?}", ma - mv, started.elapsed());
}
