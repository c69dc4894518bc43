//! Peak bookkeeping on sampled curves `(x, y)` with increasing x.

/// A local maximum of a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    /// Vertex of the parabola through the maximum and its neighbours.
    pub x: f64,
    pub height: f64,
    /// Height above the higher of the two minima separating it from
    /// taller ground (or the curve ends).
    pub prominence: f64,
    pub index: usize,
}

/// Indices of interior local maxima. A plateau counts once, at its first
/// sample.
pub fn local_maxima(points: &[(f64, f64)]) -> Vec<usize> {
    let mut out = Vec::new();
    let n = points.len();
    let mut i = 1;
    while i + 1 < n {
        if points[i].1 > points[i - 1].1 {
            let mut j = i;
            while j + 1 < n && points[j + 1].1 == points[i].1 {
                j += 1;
            }
            if j + 1 < n && points[j + 1].1 < points[i].1 {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Vertex of the parabola through samples `i − 1, i, i + 1`.
pub fn parabolic_peak(points: &[(f64, f64)], i: usize) -> (f64, f64) {
    if i == 0 || i + 1 >= points.len() {
        return points[i];
    }
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    let (x2, y2) = points[i + 1];
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if a >= 0.0 {
        return points[i];
    }
    let xv = -b / (2.0 * a);
    let c = y1 - a * x1 * x1 - b * x1;
    (xv, a * xv * xv + b * xv + c)
}

pub fn prominence(points: &[(f64, f64)], i: usize) -> f64 {
    let y = points[i].1;
    let mut left = y;
    for k in (0..i).rev() {
        if points[k].1 > y {
            break;
        }
        left = left.min(points[k].1);
    }
    let mut right = y;
    for p in &points[i + 1..] {
        if p.1 > y {
            break;
        }
        right = right.min(p.1);
    }
    y - left.max(right)
}

/// All interior maxima with their prominences.
pub fn features(points: &[(f64, f64)]) -> Vec<Feature> {
    local_maxima(points)
        .into_iter()
        .map(|i| {
            let (x, height) = parabolic_peak(points, i);
            Feature {
                x,
                height,
                prominence: prominence(points, i),
                index: i,
            }
        })
        .collect()
}

/// The most prominent maximum whose sample lies in `[lo, hi]`.
pub fn feature_in(points: &[(f64, f64)], lo: f64, hi: f64) -> Option<Feature> {
    features(points)
        .into_iter()
        .filter(|f| (lo..=hi).contains(&points[f.index].0))
        .max_by(|a, b| a.prominence.total_cmp(&b.prominence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parabola_vertex_is_exact_for_quadratics() {
        let pts: Vec<(f64, f64)> = (0..11).map(|k| {
            let x = k as f64 * 0.5;
            (x, 3.0 - (x - 2.3).powi(2))
        }).collect();
        let m = local_maxima(&pts);
        assert_eq!(m, vec![5]);
        let (x, y) = parabolic_peak(&pts, 5);
        assert_abs_diff_eq!(x, 2.3, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn shoulder_prominence() {
        // a small bump on the flank of a tall peak
        let ys = [0.0, 0.2, 1.0, 0.4, 0.3, 0.35, 0.1, 0.0];
        let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(k, &y)| (k as f64, y)).collect();
        assert_eq!(local_maxima(&pts), vec![2, 5]);
        assert_abs_diff_eq!(prominence(&pts, 5), 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(prominence(&pts, 2), 1.0, epsilon = 1e-12);
        let f = feature_in(&pts, 4.0, 6.0).unwrap();
        assert_eq!(f.index, 5);
        assert!(feature_in(&pts, 6.5, 7.0).is_none());
    }

    #[test]
    fn plateaus_and_edges() {
        let pts = [(0.0, 1.0), (1.0, 0.5), (2.0, 0.7), (3.0, 0.7), (4.0, 0.2), (5.0, 0.9)];
        assert_eq!(local_maxima(&pts), vec![2]);
    }
}
