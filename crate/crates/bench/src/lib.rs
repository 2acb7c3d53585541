//! Fixtures shared by the benchmarks in `benches/`.

use std::fmt::Write;

use uncertain_eval::{derive_rng, Gaussian, LeaderboardEntry, UncertainRating};

/// `n` ratings with σ in [0.2, 1.4] and residuals around ±0.9.
pub fn ratings(n: usize, seed: u64) -> Vec<UncertainRating> {
    let mut rng = derive_rng(seed, 0);
    let unit = Gaussian::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|v| {
            let sigma = 0.2 + 1.2 * uncertain_eval::std_normal_cdf(unit.draw(&mut rng));
            let mean = 3.0 + unit.draw(&mut rng);
            UncertainRating::new(format!("u{v}"), "i", Gaussian::from_std(mean, sigma).unwrap())
                .with_predictor(mean + 0.9 * unit.draw(&mut rng))
        })
        .collect()
}

/// `k` systems with close means and small variances, like a leaderboard.
pub fn systems(k: usize) -> Vec<(String, Gaussian)> {
    (0..k)
        .map(|i| {
            (
                format!("R{}", i + 1),
                Gaussian::new(0.8567 + 0.0005 * i as f64, 3.6e-7).unwrap(),
            )
        })
        .collect()
}

pub fn leaderboard(k: usize) -> Vec<LeaderboardEntry> {
    (0..k)
        .map(|i| LeaderboardEntry::new(i as u32 + 1, format!("team {i}"), 0.8567 + 0.0005 * i as f64))
        .collect()
}

/// Netflix training layout with `movies` blocks of `per_movie` ratings.
pub fn netflix_text(movies: usize, per_movie: usize) -> String {
    let mut s = String::with_capacity(movies * per_movie * 20);
    for m in 0..movies {
        let _ = writeln!(s, "{}:", m + 1);
        for k in 0..per_movie {
            let _ = writeln!(
                s,
                "{},{},2005-{:02}-{:02}",
                1 + (m * per_movie + k) * 7 % 2_649_429,
                1 + k % 5,
                1 + k % 12,
                1 + k % 28
            );
        }
    }
    s
}
