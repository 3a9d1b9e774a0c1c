//! Synthesize directionally correlated noise and compare its measured
//! correlation with the triangular profile `(ell - t) / ell`.

use m2m::noise::{estimate_statistics, structured_noise, theoretical_correlation, NoiseConfig};

fn main() -> m2m::Result<()> {
    for (p, q) in [(0, 1), (1, 0), (1, 1)] {
        let cfg = NoiseConfig {
            p,
            q,
            ..NoiseConfig::horizontal(5, 0.1, 7)
        };
        let field = structured_noise(400, 400, &cfg)?;
        let stats = estimate_statistics(&field, p, q, 6, 5)?;
        println!("direction ({p},{q}), std {:.4}", field.std());
        for (t, rho) in stats.along.iter().enumerate() {
            let t = t + 1;
            println!(
                "  lag {t}: measured {rho:+.3}  expected {:+.3}",
                theoretical_correlation(cfg.ell, t)
            );
        }
        println!("  orthogonal lag 1: {:+.3}", stats.orthogonal[0]);
    }
    Ok(())
}
