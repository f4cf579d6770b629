use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::extraction::Mesh;

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Static 3-d tree answering exact nearest-neighbour squared distances.
pub struct KdTree {
    points: Vec<[f64; 3]>,
    // implicit balanced layout: node k splits on axis axes[k] at points[k]
    axes: Vec<u8>,
}

impl KdTree {
    pub fn new(points: &[[f64; 3]]) -> Self {
        let mut pts = points.to_vec();
        let mut axes = vec![0u8; pts.len()];
        build(&mut pts, &mut axes, 0);
        KdTree { points: pts, axes }
    }

    /// Smallest squared distance from `q` to any stored point.
    pub fn nearest(&self, q: &[f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        self.search(0, self.points.len(), q, &mut best);
        best
    }

    fn search(&self, lo: usize, hi: usize, q: &[f64; 3], best: &mut f64) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = &self.points[mid];
        let d = dist2(p, q);
        if d < *best {
            *best = d;
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, q, best);
        if diff * diff <= *best {
            self.search(far.0, far.1, q, best);
        }
    }
}

fn build(pts: &mut [[f64; 3]], axes: &mut [u8], depth: usize) {
    if pts.is_empty() {
        return;
    }
    // split on the axis of largest extent
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in pts.iter() {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap_or(depth % 3);
    let mid = pts.len() / 2;
    pts.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
    axes[mid] = axis as u8;
    let (left, right) = pts.split_at_mut(mid);
    let (la, ra) = axes.split_at_mut(mid);
    build(left, la, depth + 1);
    build(&mut right[1..], &mut ra[1..], depth + 1);
}

fn check(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("chamfer distance needs two non-empty point sets".into()));
    }
    Ok(())
}

fn directed(from: &[[f64; 3]], to: &KdTree) -> f64 {
    from.iter().map(|p| to.nearest(p)).sum::<f64>() / from.len() as f64
}

/// Mean squared nearest distance from `a` to `b` plus from `b` to `a`.
pub fn chamfer(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    check(a, b)?;
    Ok(directed(a, &KdTree::new(b)) + directed(b, &KdTree::new(a)))
}

/// Quadratic-time reference for [`chamfer`].
pub fn chamfer_brute(a: &[[f64; 3]], b: &[[f64; 3]]) -> Result<f64> {
    check(a, b)?;
    let dir = |x: &[[f64; 3]], y: &[[f64; 3]]| {
        x.iter()
            .map(|p| y.iter().map(|q| dist2(q, p)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / x.len() as f64
    };
    Ok(dir(a, b) + dir(b, a))
}

/// `n` points drawn uniformly by area over the mesh surface.
pub fn sample_surface(mesh: &Mesh, n: usize, seed: u64) -> Result<Vec<[f64; 3]>> {
    let cum: Vec<f64> = (0..mesh.triangles.len())
        .scan(0.0, |acc, t| {
            *acc += mesh.triangle_area(t);
            Some(*acc)
        })
        .collect();
    let total = cum.last().copied().unwrap_or(0.0);
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Empty("cannot sample an empty mesh".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            let t = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
            let [a, b, c] = mesh.triangles[t].map(|i| mesh.vertices[i as usize]);
            let (r1, r2): (f64, f64) = (rng.random(), rng.random());
            let s = r1.sqrt();
            let (wa, wb, wc) = (1.0 - s, s * (1.0 - r2), s * r2);
            [0, 1, 2].map(|d| wa * a[d] + wb * b[d] + wc * c[d])
        })
        .collect())
}
