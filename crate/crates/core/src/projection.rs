//! Two-component PCA by power iteration, for scatter views of the corpus.

const ITERATIONS: usize = 200;

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Applies the centered covariance (up to scale) to `v`: `Xᵀ X v`.
fn apply(rows: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for r in rows {
        let s: f64 = r.iter().zip(v).map(|(a, b)| a * b).sum();
        for (o, a) in out.iter_mut().zip(r) {
            *o += s * a;
        }
    }
    out
}

fn leading_direction(rows: &[Vec<f64>], dim: usize, deflate: Option<&[f64]>) -> Vec<f64> {
    // Deterministic, non-symmetric start.
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + (i as f64 + 1.0).sqrt().fract()).collect();
    for _ in 0..ITERATIONS {
        if let Some(u) = deflate {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
        }
        v = apply(rows, &v);
        if let Some(u) = deflate {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= d * y);
        }
        if normalize(&mut v) == 0.0 {
            break;
        }
    }
    // Fix the sign so the largest-magnitude entry is positive.
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Projects each vector onto the top two principal components.
pub fn project_2d(vectors: &[&[f32]]) -> Vec<[f64; 2]> {
    let Some(first) = vectors.first() else {
        return Vec::new();
    };
    let dim = first.len();
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, &x) in mean.iter_mut().zip(v.iter()) {
            *m += x as f64 / n;
        }
    }
    let rows: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(&x, m)| x as f64 - m).collect())
        .collect();
    let u1 = leading_direction(&rows, dim, None);
    let u2 = leading_direction(&rows, dim, Some(&u1));
    rows.iter()
        .map(|r| {
            let a = r.iter().zip(&u1).map(|(x, y)| x * y).sum();
            let b = r.iter().zip(&u2).map(|(x, y)| x * y).sum();
            [a, b]
        })
        .collect()
}
