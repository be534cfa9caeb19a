//! Euclidean projection onto the scaled simplex `{x >= 0, sum x = radius}`.

/// Projects `y` in place (sort-and-threshold, `O(n log n)`).
pub fn project_scaled_simplex(y: &mut [f64], radius: f64) {
    if y.is_empty() {
        return;
    }
    if radius <= 0.0 {
        y.fill(0.0);
        return;
    }
    let mut sorted = y.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    for x in y.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}
