//! Two-dimensional PCA projection and an SVG scatter plot.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use zslforge::data::ClassId;
use zslforge::Matrix;

const POWER_ITERS: usize = 1000;

/// Projects rows of `x` onto the two leading principal axes of their
/// covariance. Axes come from power iteration with deflation, started from a
/// fixed vector, so the projection is deterministic; each axis is signed so
/// its largest-magnitude loading is positive.
pub fn pca_2d(x: &Matrix) -> Matrix {
    let (n, d) = x.shape();
    if n == 0 {
        return Matrix::zeros(0, 2);
    }
    let mean = x.col_mean();
    let centered = x.zip_map(&mean.broadcast_rows(n), |a, m| a - m);
    let mut cov = Matrix::matmul_t(&centered, true, &centered, false).map(|v| v / n as f64);
    let mut axes = Vec::with_capacity(2);
    for _ in 0..2 {
        let axis = leading_eigenvector(&cov);
        let lambda = quadratic_form(&cov, &axis);
        for i in 0..d {
            for j in 0..d {
                let v = cov.get(i, j) - lambda * axis[i] * axis[j];
                cov.set(i, j, v);
            }
        }
        axes.push(axis);
    }
    let mut basis = Matrix::zeros(d, 2);
    for (c, axis) in axes.iter().enumerate() {
        for (r, &v) in axis.iter().enumerate() {
            basis.set(r, c, v);
        }
    }
    centered.matmul(&basis)
}

fn quadratic_form(m: &Matrix, v: &[f64]) -> f64 {
    (0..v.len())
        .map(|i| v[i] * m.row(i).iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

fn leading_eigenvector(m: &Matrix) -> Vec<f64> {
    let d = m.rows();
    let mut v: Vec<f64> = (0..d).map(|j| 1.0 / (1.0 + j as f64)).collect();
    normalize(&mut v);
    for _ in 0..POWER_ITERS {
        let mut next: Vec<f64> = (0..d)
            .map(|i| m.row(i).iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        if normalize(&mut next) == 0.0 {
            // no variance left in this direction
            return vec![0.0; d];
        }
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if delta < 1e-13 {
            break;
        }
    }
    let pivot = v
        .iter()
        .copied()
        .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

pub fn embedding_csv(points: &Matrix, labels: &[ClassId]) -> String {
    let mut out = String::from("x,y,class\n");
    for (p, c) in points.iter_rows().zip(labels) {
        let _ = writeln!(out, "{},{},{}", p[0], p[1], c);
    }
    out
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn embedding_svg(points: &Matrix, labels: &[ClassId], title: &str) -> String {
    let (w, h, margin) = (640.0, 480.0, 40.0);
    let xs: Vec<f64> = points.iter_rows().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter_rows().map(|p| p[1]).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if v.is_empty() || hi - lo < 1e-12 {
            (lo.min(0.0) - 1.0, lo.max(0.0) + 1.0)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = span(&xs);
    let (y0, y1) = span(&ys);
    let sx = |x: f64| margin + (x - x0) / (x1 - x0) * (w - 2.0 * margin - 120.0);
    let sy = |y: f64| h - margin - (y - y0) / (y1 - y0) * (h - 2.0 * margin);

    let mut colors = BTreeMap::new();
    for &c in labels {
        let next = colors.len();
        colors.entry(c).or_insert(PALETTE[next % PALETTE.len()]);
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{margin}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    for ((&x, &y), c) in xs.iter().zip(&ys).zip(labels) {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.7"/>"#,
            sx(x),
            sy(y),
            colors[c]
        );
    }
    for (i, (c, color)) in colors.iter().enumerate() {
        let y = margin + 18.0 * i as f64;
        let x = w - margin - 100.0;
        let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="5" fill="{color}"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">class {c}</text>"#,
            x + 10.0,
            y + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
