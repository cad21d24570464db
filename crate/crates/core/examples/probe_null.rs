// scratch probe: distribution of original vs knockoff stats on null data
use mmscreen::io::ExpressionMatrix;
use mmscreen::knockoff::run_knockoff_filter;
use mmscreen::mmtest::MmConfig;
use mmscreen::neighborhood::AuxiliarySpace;
use ndarray::Array2;
use rand_distr::Distribution;

fn grid_space(side: usize) -> AuxiliarySpace {
    let mut coords = Array2::zeros((side * side, 2));
    for x in 0..side {
        for y in 0..side {
            coords[(x * side + y, 0)] = x as f64;
            coords[(x * side + y, 1)] = y as f64;
        }
    }
    AuxiliarySpace::Coordinates(coords)
}

fn nb_matrix(n: usize, p: usize, mean: f64, size: f64, key: u64) -> ExpressionMatrix {
    let mut values = Array2::zeros((n, p));
    for j in 0..p {
        let mut rng = mmscreen::rng::stream(key, 95, j as u64);
        for i in 0..n {
            let gamma = rand_distr::Gamma::new(size, mean / size).unwrap();
            let draw: f64 = gamma.sample(&mut rng);
            let lambda = draw.max(f64::MIN_POSITIVE);
            values[(i, j)] = rand_distr::Poisson::new(lambda).unwrap().sample(&mut rng);
        }
    }
    ExpressionMatrix::new(
        values,
        (0..n).map(|i| format!("s{i}")).collect(),
        (0..p).map(|j| format!("g{j}")).collect(),
    )
    .unwrap()
}

fn summarize(tag: &str, v: &[f64]) {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| s[((s.len() as f64 - 1.0) * p) as usize];
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    println!(
        "{tag}: mean={mean:.4} q10={:.4} q50={:.4} q90={:.4} q99={:.4} max={:.4}",
        q(0.1),
        q(0.5),
        q(0.9),
        q(0.99),
        s[s.len() - 1]
    );
}

fn ks(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

fn main() {
    let side: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(15);
    let p: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(500);
    let space = grid_space(side);
    let m = nb_matrix(side * side, p, 5.0, 2.0, 4);
    let run = run_knockoff_filter(&m, &space, &MmConfig::default(), 0.1, 6).unwrap();
    let orig: Vec<f64> = run.orig.iter().map(|s| s.mm_stat).collect();
    summarize("orig ", &orig);
    summarize("knock", &run.knock_raw);
    let phi_o: Vec<f64> = run.orig.iter().map(|s| s.phi_hat).collect();
    summarize("phi_o", &phi_o);
    println!("KS orig-vs-knock = {}", ks(&orig, &run.knock_raw));
    println!("threshold={} selected={}", run.threshold, run.selected.len());

    // strong two-block signal power scan
    for (n_side, hi, lo) in [(12usize, 20.0, 4.0), (15, 15.0, 3.0), (15, 20.0, 4.0)] {
        let n = n_side * n_side;
        let sp = grid_space(n_side);
        let s = 10;
        let pp = 60;
        let mut values = Array2::zeros((n, pp));
        for j in 0..pp {
            let mut rng = mmscreen::rng::stream(7, 93, j as u64);
            for i in 0..n {
                let mean = if j < s && (i / n_side) < n_side / 2 { hi } else { lo };
                let gamma = rand_distr::Gamma::new(2.0, mean / 2.0).unwrap();
                let draw: f64 = gamma.sample(&mut rng);
                let lambda = draw.max(f64::MIN_POSITIVE);
                values[(i, j)] = rand_distr::Poisson::new(lambda).unwrap().sample(&mut rng);
            }
        }
        let m = ExpressionMatrix::new(
            values,
            (0..n).map(|i| format!("s{i}")).collect(),
            (0..pp).map(|j| format!("g{j}")).collect(),
        )
        .unwrap();
        let run = run_knockoff_filter(&m, &sp, &MmConfig::default(), 0.05, 1).unwrap();
        let hits = run.selected.iter().filter(|&&j| j < s).count();
        let ovals: Vec<f64> = run.orig.iter().map(|st| st.mm_stat).collect();
        let mut rel: Vec<f64> = ovals[..s].to_vec();
        rel.sort_by(f64::total_cmp);
        let mut ksmax = run.knock_scaled.clone();
        ksmax.sort_by(f64::total_cmp);
        println!(
            "side={n_side} hi={hi} lo={lo}: power={} sel={} thr={:.2} min_rel_orig={:.2} max_knock_scaled={:.2}",
            hits as f64 / s as f64,
            run.selected.len(),
            run.threshold,
            rel[0],
            ksmax[ksmax.len() - 1]
        );
    }

    // p = 1 experiment
    let mut selected = 0;
    let mut ratio_sum = 0.0;
    for seed in 0..50u64 {
        let m = nb_matrix(side * side, 1, 5.0, 2.0, 1000 + seed);
        let run = run_knockoff_filter(&m, &space, &MmConfig::default(), 0.1, seed).unwrap();
        if !run.selected.is_empty() {
            selected += 1;
        }
        ratio_sum += run.orig[0].mm_stat - run.knock_scaled[0];
        if seed < 10 {
            println!(
                "seed={seed} orig={:.4} knock_raw={:.4} scaled={:.4} iters_o={} iters_k={:?}",
                run.orig[0].mm_stat, run.knock_raw[0], run.knock_scaled[0], run.orig[0].iters_used,
                run.orig[0].phi_hat
            );
        }
    }
    println!("p=1: selected {selected}/50, mean orig-minus-scaled = {}", ratio_sum / 50.0);
}
