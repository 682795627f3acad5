//! Deterministic synthetic fundus-like images: a smooth illuminated
//! background, an occasional bright disc, and dark curved vessels of varying
//! width.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imgcore::{Plane, RgbImage};

const CURVE_SEGMENTS: usize = 48;

struct Vessel {
    points: Vec<(f64, f64)>,
    sigma: f64,
    depth: f64,
}

fn bezier(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64), t: f64) -> (f64, f64) {
    let u = 1.0 - t;
    (u * u * p0.0 + 2.0 * u * t * p1.0 + t * t * p2.0, u * u * p0.1 + 2.0 * u * t * p1.1 + t * t * p2.1)
}

fn seg_dist2(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    qx * qx + qy * qy
}

fn edge_point(rng: &mut ChaCha8Rng, w: f64, h: f64) -> (f64, f64) {
    match rng.gen_range(0..4) {
        0 => (rng.gen_range(0.0..w), -2.0),
        1 => (rng.gen_range(0.0..w), h + 1.0),
        2 => (-2.0, rng.gen_range(0.0..h)),
        _ => (w + 1.0, rng.gen_range(0.0..h)),
    }
}

/// Gray vessel image in `[0,1]`, fully determined by its arguments.
pub fn vessel_plane(width: usize, height: usize, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let base = rng.gen_range(0.45..0.65);
    let (gx, gy) = (rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15));
    let disc = rng.gen_bool(0.3).then(|| {
        (rng.gen_range(0.0..w), rng.gen_range(0.0..h), rng.gen_range(0.08..0.2) * w.max(h), rng.gen_range(0.15..0.35))
    });
    let n_vessels = rng.gen_range(3..=6);
    let vessels: Vec<Vessel> = (0..n_vessels)
        .map(|_| {
            let p0 = edge_point(&mut rng, w, h);
            let p2 = edge_point(&mut rng, w, h);
            let p1 = (rng.gen_range(0.0..w), rng.gen_range(0.0..h));
            Vessel {
                points: (0..=CURVE_SEGMENTS).map(|i| bezier(p0, p1, p2, i as f64 / CURVE_SEGMENTS as f64)).collect(),
                sigma: rng.gen_range(0.5..1.6),
                depth: rng.gen_range(0.2..0.4),
            }
        })
        .collect();
    let texture: Vec<(f64, f64, f64, f64)> =
        (0..3).map(|_| (rng.gen_range(0.2..0.9), rng.gen_range(0.2..0.9), rng.gen_range(0.0..6.3), 0.01)).collect();

    Plane::from_fn(width, height, |x, y| {
        let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut v = base + gx * (fx / w - 0.5) + gy * (fy / h - 0.5);
        for &(kx, ky, ph, a) in &texture {
            v += a * (kx * fx + ky * fy + ph).sin();
        }
        if let Some((cx, cy, r, amp)) = disc {
            let d2 = (fx - cx).powi(2) + (fy - cy).powi(2);
            v += amp * (-d2 / (2.0 * r * r)).exp();
        }
        let mut keep = 1.0;
        for vs in &vessels {
            let d2 = vs.points.windows(2).map(|s| seg_dist2((fx, fy), s[0], s[1])).fold(f64::INFINITY, f64::min);
            keep *= 1.0 - vs.depth * (-d2 / (2.0 * vs.sigma * vs.sigma)).exp();
        }
        (v * keep).clamp(0.0, 1.0)
    })
}

/// `n` square patches with seeds `seed, seed+1, ...`.
pub fn vessel_patches(n: usize, size: usize, seed: u64) -> Vec<Plane> {
    (0..n as u64).map(|i| vessel_plane(size, size, seed.wrapping_add(i))).collect()
}

/// Colour rendering with fundus-like channel balance (red high, blue low).
pub fn fundus_rgb(width: usize, height: usize, seed: u64) -> RgbImage {
    let g = vessel_plane(width, height, seed);
    RgbImage::new(
        g.map(|v| (0.25 + 0.9 * v).min(1.0)),
        g.map(|v| 0.85 * v),
        g.map(|v| 0.35 * v),
    )
    .expect("equal dimensions")
}
