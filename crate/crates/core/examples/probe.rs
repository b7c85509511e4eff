use binq_core::{kmeans, KmeansParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sse_of_group(points: &[Vec<f64>], members: &[usize]) -> f64 {
    if members.is_empty() { return 0.0; }
    let dim = points[0].len();
    let mut mean = vec![0.0; dim];
    for &i in members { for (m, v) in mean.iter_mut().zip(&points[i]) { *m += v; } }
    for m in &mut mean { *m /= members.len() as f64; }
    members.iter().map(|&i| points[i].iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum()
}

fn brute(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    for mask in 0..(1u32 << n) {
        let (mut l, mut r) = (Vec::new(), Vec::new());
        for i in 0..n { if mask & (1 << i) != 0 { l.push(i) } else { r.push(i) } }
        let c = sse_of_group(points, &l) + sse_of_group(points, &r);
        if c < best { best = c; }
    }
    best
}

fn main() {
    let mut misses = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(4..=10);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        let params = KmeansParams { tol: 1e-12, ..Default::default() };
        let res = kmeans(&points, 2, seed, params).unwrap();
        let b = brute(&points);
        let gap = (res.objective - b) / b.max(1.0);
        if gap > 1e-9 {
            misses += 1;
            println!("seed {seed:2} n={n} lloyd {:.6} brute {:.6} relgap {:.2e} iters {}", res.objective, b, gap, res.objective_history.len());
        }
    }
    println!("misses {misses}");
}
