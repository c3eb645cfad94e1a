//! Planar convex hulls.

/// Indices of the convex hull vertices of `pts`, counter-clockwise, by
/// Andrew's monotone chain. Collinear boundary points are dropped.
pub fn convex_hull_2d(pts: &[[f64; 2]]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    idx.sort_by(|&a, &b| {
        pts[a][0]
            .total_cmp(&pts[b][0])
            .then(pts[a][1].total_cmp(&pts[b][1]))
            .then(a.cmp(&b))
    });
    idx.dedup_by(|a, b| pts[*a] == pts[*b]);
    if idx.len() < 3 {
        return idx;
    }
    let cross = |o: usize, a: usize, b: usize| {
        (pts[a][0] - pts[o][0]) * (pts[b][1] - pts[o][1]) - (pts[a][1] - pts[o][1]) * (pts[b][0] - pts[o][0])
    };
    let mut hull: Vec<usize> = Vec::with_capacity(2 * idx.len());
    for &i in &idx {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    let lower = hull.len() + 1;
    for &i in idx.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], i) <= 0.0 {
            hull.pop();
        }
        hull.push(i);
    }
    hull.pop();
    hull
}

/// Signed depth of `q` inside the polygon with counter-clockwise vertices
/// `poly`: the distance to the nearest edge line, positive inside.
pub fn depth_in_polygon(poly: &[[f64; 2]], q: [f64; 2]) -> f64 {
    let m = poly.len();
    if m < 3 {
        return 0.0;
    }
    let mut depth = f64::INFINITY;
    for k in 0..m {
        let a = poly[k];
        let b = poly[(k + 1) % m];
        let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
        let len = ex.hypot(ey);
        if len == 0.0 {
            continue;
        }
        // left normal points inward for a counter-clockwise polygon
        let d = (ex * (q[1] - a[1]) - ey * (q[0] - a[0])) / len;
        depth = depth.min(d);
    }
    depth
}
