//! Shared instance generators and independent oracles for the integration
//! suite. Everything here recomputes results from first principles, without
//! touching the library's evaluation paths.

use aggnash_core::func::FunctionSpec;
use aggnash_core::game::{Game, Profile};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random congestion instance: `n <= n_max` players, `d <= d_max`
/// coordinates, at most `x_max` actions per player, actions in `[0, 1]^d`,
/// weights in `[0.8, 1.5]`.
///
/// Price functions are nondecreasing and centered so their magnitude on the
/// aggregate range stays below their Lipschitz constant, which keeps the
/// potential drop from any start within the step-budget constant.
pub fn random_congestion_game(
    rng: &mut ChaCha8Rng,
    n_max: usize,
    x_max: usize,
    d_max: usize,
) -> Game {
    let n = rng.random_range(2..=n_max.max(2));
    let d = rng.random_range(1..=d_max.max(1));
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.8..1.5)).collect();
    let action_sets: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| {
            let k = rng.random_range(1..=x_max.max(1));
            (0..k)
                .map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect())
                .collect()
        })
        .collect();

    // The aggregate range depends only on actions and weights.
    let mut d1 = f64::INFINITY;
    let mut d2 = f64::NEG_INFINITY;
    for t in 0..d {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (set, a) in action_sets.iter().zip(&weights) {
            lo += a * set.iter().map(|p| p[t]).fold(f64::INFINITY, f64::min);
            hi += a * set.iter().map(|p| p[t]).fold(f64::NEG_INFINITY, f64::max);
        }
        d1 = d1.min(lo / n as f64);
        d2 = d2.max(hi / n as f64);
    }
    let mid = 0.5 * (d1 + d2);
    let width = (d2 - d1).max(1e-9);

    let g: Vec<FunctionSpec> = (0..d).map(|_| centered_price(rng, mid, width, d1)).collect();
    let h: Vec<FunctionSpec> = (0..n)
        .map(|_| FunctionSpec::Affine {
            c0: rng.random_range(-0.5..0.5),
            c1: rng.random_range(-0.5..0.5),
        })
        .collect();
    let r: Vec<Vec<f64>> = action_sets
        .iter()
        .map(|set| set.iter().map(|_| rng.random_range(-0.5..0.5)).collect())
        .collect();
    Game::new(weights, action_sets, g, h, r, vec![0; n]).expect("generated instance is valid")
}

/// Random one-dimensional instance with exactly two actions per player,
/// the shape the charging benchmark uses.
pub fn random_two_action_game_1d(rng: &mut ChaCha8Rng, n: usize) -> Game {
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.8..1.2)).collect();
    let action_sets: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|_| {
            let a = rng.random_range(0.0..0.45);
            let b = rng.random_range(0.55..1.0);
            vec![vec![a], vec![b]]
        })
        .collect();
    let mut lo = 0.0;
    let mut hi = 0.0;
    for (set, a) in action_sets.iter().zip(&weights) {
        lo += a * set[0][0];
        hi += a * set[1][0];
    }
    let (d1, d2) = (lo / n as f64, hi / n as f64);
    let g = vec![centered_price(rng, 0.5 * (d1 + d2), d2 - d1, d1)];
    let h: Vec<FunctionSpec> = (0..n)
        .map(|_| FunctionSpec::Affine {
            c0: rng.random_range(-0.5..0.5),
            c1: rng.random_range(-0.5..0.5),
        })
        .collect();
    let r: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)])
        .collect();
    Game::new(weights, action_sets, g, h, r, vec![0; n]).expect("generated instance is valid")
}

fn centered_price(rng: &mut ChaCha8Rng, mid: f64, width: f64, d1: f64) -> FunctionSpec {
    match rng.random_range(0..3) {
        0 => {
            let slope = rng.random_range(0.5..2.0);
            FunctionSpec::Affine {
                c0: -slope * mid,
                c1: slope,
            }
        }
        1 => {
            // c2 (s - d1)^2 + c1 (s - d1) + c0, centered over the range.
            let c1 = rng.random_range(0.2..1.0);
            let c2 = rng.random_range(0.0..0.5);
            let rise = c1 * width + c2 * width * width;
            FunctionSpec::Quadratic {
                c0: c2 * d1 * d1 - c1 * d1 - rise / 2.0,
                c1: c1 - 2.0 * c2 * d1,
                c2,
            }
        }
        _ => {
            let segments = rng.random_range(2..=5);
            let lo = mid - 0.75 * width;
            let step = 1.5 * width / segments as f64;
            let mut breakpoints = Vec::with_capacity(segments + 1);
            let mut values = Vec::with_capacity(segments + 1);
            let mut v = 0.0;
            for j in 0..=segments {
                breakpoints.push(lo + j as f64 * step);
                values.push(v);
                v += rng.random_range(0.0..1.0) * step;
            }
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            for v in &mut values {
                *v -= mean;
            }
            FunctionSpec::TabulatedPiecewiseLinear {
                breakpoints,
                values,
            }
        }
    }
}

/// Uniformly random pure profile of a game.
pub fn random_profile(rng: &mut ChaCha8Rng, game: &Game) -> Profile {
    Profile::nonconvex(
        game.action_sets
            .iter()
            .map(|set| set[rng.random_range(0..set.len())].clone())
            .collect(),
    )
}

/// Exact one-dimensional envelope oracle: the optimum is attained on at most
/// two points, so enumerate singletons and all pairs, solving each pair's
/// weight in closed form.
pub fn envelope_oracle_1d(points: &[f64], values: &[f64], x: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |v: f64| best = Some(best.map_or(v, |b: f64| b.min(v)));
    for (i, &a) in points.iter().enumerate() {
        if (a - x).abs() <= 1e-12 {
            consider(values[i]);
        }
        for (j, &b) in points.iter().enumerate() {
            if (b - a).abs() <= 1e-15 {
                continue;
            }
            let t = (x - a) / (b - a);
            if (0.0..=1.0).contains(&t) {
                consider((1.0 - t) * values[i] + t * values[j]);
            }
        }
    }
    best
}

/// Exact two-dimensional envelope oracle: enumerate supports of at most
/// three points and solve the barycentric systems directly.
pub fn envelope_oracle_2d(points: &[Vec<f64>], values: &[f64], x: &[f64]) -> Option<f64> {
    let n = points.len();
    let mut best: Option<f64> = None;
    let mut consider = |v: f64| best = Some(best.map_or(v, |b: f64| b.min(v)));
    let dist2 = |a: &[f64], b: &[f64]| {
        (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
    };
    for i in 0..n {
        if dist2(&points[i], x) <= 1e-20 {
            consider(values[i]);
        }
        for j in i + 1..n {
            let d = [points[j][0] - points[i][0], points[j][1] - points[i][1]];
            let dd = d[0] * d[0] + d[1] * d[1];
            if dd > 1e-18 {
                let t = ((x[0] - points[i][0]) * d[0] + (x[1] - points[i][1]) * d[1]) / dd;
                let proj = [points[i][0] + t * d[0], points[i][1] + t * d[1]];
                if (0.0..=1.0).contains(&t) && dist2(&proj, x) <= 1e-20 {
                    consider((1.0 - t) * values[i] + t * values[j]);
                }
            }
            for k in j + 1..n {
                let m = [
                    [points[i][0], points[j][0], points[k][0]],
                    [points[i][1], points[j][1], points[k][1]],
                    [1.0, 1.0, 1.0],
                ];
                let rhs = [x[0], x[1], 1.0];
                if let Some(al) = solve3(&m, &rhs) {
                    if al.iter().all(|&a| a >= -1e-10) {
                        consider(al[0] * values[i] + al[1] * values[j] + al[2] * values[k]);
                    }
                }
            }
        }
    }
    best
}

fn solve3(m: &[[f64; 3]; 3], rhs: &[f64; 3]) -> Option<[f64; 3]> {
    let det = |a: &[[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for c in 0..3 {
        let mut mc = *m;
        for r in 0..3 {
            mc[r][c] = rhs[r];
        }
        out[c] = det(&mc) / d;
    }
    Some(out)
}
