use super::GanError;
use crate::degrade::ScaleFactor;
use crate::imgcore::{Plane, RgbImage};
use crate::nn::{LayerSpec, Network, Shape4, Tensor4};

fn input_channels(g: &Network<f32>) -> Option<usize> {
    match g.specs().first() {
        Some(LayerSpec::Conv { in_channels, .. }) => Some(*in_channels),
        _ => None,
    }
}

fn check_stages(stages: &[Network<f32>], r: ScaleFactor) -> Result<(), GanError> {
    if stages.len() != r.stages() {
        return Err(GanError::StageCount { scale: r.get(), expected: r.stages(), got: stages.len() });
    }
    Ok(())
}

fn run_stage(g: &Network<f32>, planes: &[&Plane]) -> Result<Vec<Plane>, GanError> {
    let (w, h) = planes[0].dims();
    let data = planes.iter().flat_map(|p| p.data().iter().map(|&v| v as f32)).collect();
    let y = g.infer(&Tensor4::from_vec(Shape4::new(1, planes.len(), h, w), data))?;
    let s = y.shape();
    if s.c != planes.len() || s.h != 2 * h || s.w != 2 * w {
        return Err(GanError::Shape(format!("stage maps ({}, {h}, {w}) to {s}, expected a x2 upscale", planes.len())));
    }
    Ok((0..s.c)
        .map(|c| {
            let off = c * s.h * s.w;
            Plane::from_raw(s.w, s.h, y.data()[off..off + s.h * s.w].iter().map(|&v| f64::from(v).clamp(0.0, 1.0)).collect())
        })
        .collect())
}

/// One ×2 generator application to a gray plane, clamped to `[0,1]`.
pub fn apply_stage(g: &Network<f32>, p: &Plane) -> Result<Plane, GanError> {
    Ok(run_stage(g, &[p])?.remove(0))
}

/// Applies `log2(r)` ×2 stages in order.
pub fn super_resolve_plane(stages: &[Network<f32>], lr: &Plane, r: ScaleFactor) -> Result<Plane, GanError> {
    check_stages(stages, r)?;
    let mut p = lr.clone();
    for g in stages {
        p = apply_stage(g, &p)?;
    }
    Ok(p)
}

/// Colour super-resolution: single-channel stages run on each channel
/// separately, three-channel stages on all three together.
pub fn super_resolve(stages: &[Network<f32>], lr: &RgbImage, r: ScaleFactor) -> Result<RgbImage, GanError> {
    check_stages(stages, r)?;
    let [mut cr, mut cg, mut cb] = lr.channels().map(Clone::clone);
    for g in stages {
        match input_channels(g) {
            Some(1) => {
                cr = apply_stage(g, &cr)?;
                cg = apply_stage(g, &cg)?;
                cb = apply_stage(g, &cb)?;
            }
            Some(3) => {
                let mut out = run_stage(g, &[&cr, &cg, &cb])?.into_iter();
                cr = out.next().expect("3 channels");
                cg = out.next().expect("3 channels");
                cb = out.next().expect("3 channels");
            }
            other => return Err(GanError::Shape(format!("stage takes {other:?} channels; expected 1 or 3"))),
        }
    }
    Ok(RgbImage::new(cr, cg, cb)?)
}
