//! Random flip, right-angle rotation and rescaling, applied identically to an
//! image and all of its label maps.

use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nets::layers::{bilinear_resize, Feat};
use crate::types::{ImageTensor, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Rotation {
    #[default]
    None,
    /// Clockwise quarter turn.
    R90,
    R180,
    R270,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub flip: bool,
    pub rotation: Rotation,
    pub scale: f64,
}

impl Default for Transform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Transform {
    pub const IDENTITY: Transform = Transform {
        flip: false,
        rotation: Rotation::None,
        scale: 1.0,
    };

    /// Flip with probability 0.5; rotate with probability 0.5 by a quarter,
    /// half or three-quarter turn chosen uniformly; rescale by a factor drawn
    /// uniformly from [0.9, 1.1].
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        let flip = rng.random_bool(0.5);
        let rotation = if rng.random_bool(0.5) {
            [Rotation::R90, Rotation::R180, Rotation::R270][rng.random_range(0..3)]
        } else {
            Rotation::None
        };
        let scale = rng.random_range(0.9..=1.1);
        Self {
            flip,
            rotation,
            scale,
        }
    }

    fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let (h, w) = match self.rotation {
            Rotation::R90 | Rotation::R270 => (w, h),
            _ => (h, w),
        };
        let sized = |n: usize| ((n as f64 * self.scale).round() as usize).max(1);
        (sized(h), sized(w))
    }
}

/// Source coordinate in the untransformed plane for output `(y, x)` of the
/// flip+rotation step (before rescaling).
fn source_of(t: &Transform, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
    let (sy, sx) = match t.rotation {
        Rotation::None => (y, x),
        Rotation::R90 => (h - 1 - x, y),
        Rotation::R180 => (h - 1 - y, w - 1 - x),
        Rotation::R270 => (x, w - 1 - y),
    };
    if t.flip {
        (sy, w - 1 - sx)
    } else {
        (sy, sx)
    }
}

fn orient<T: Copy>(plane: &Array2<T>, t: &Transform) -> Array2<T> {
    let (h, w) = plane.dim();
    let dims = match t.rotation {
        Rotation::R90 | Rotation::R270 => (w, h),
        _ => (h, w),
    };
    Array2::from_shape_fn(dims, |(y, x)| {
        let (sy, sx) = source_of(t, y, x, h, w);
        plane[[sy, sx]]
    })
}

fn nearest_index(o: usize, n_in: usize, n_out: usize) -> usize {
    (((o as f64 + 0.5) * n_in as f64 / n_out as f64) as usize).min(n_in - 1)
}

pub fn transform_labels(labels: &LabelMap, t: &Transform) -> Result<LabelMap> {
    let oriented = orient(labels.data(), t);
    let (h, w) = oriented.dim();
    let (oh, ow) = t.output_size(labels.dim().0, labels.dim().1);
    let out = if (oh, ow) == (h, w) {
        oriented
    } else {
        Array2::from_shape_fn((oh, ow), |(y, x)| {
            oriented[[nearest_index(y, h, oh), nearest_index(x, w, ow)]]
        })
    };
    LabelMap::new(out, labels.num_classes())
}

pub fn transform_image(img: &ImageTensor, t: &Transform) -> Result<ImageTensor> {
    let (c, h, w) = img.dim();
    let planes: Vec<Array2<f64>> = img
        .data()
        .axis_iter(Axis(0))
        .map(|p| orient(&p.to_owned(), t))
        .collect();
    let (rh, rw) = planes[0].dim();
    let views: Vec<_> = planes.iter().map(|p| p.view()).collect();
    let oriented: Array3<f64> = ndarray::stack(Axis(0), &views).expect("planes share a shape");
    let (oh, ow) = t.output_size(h, w);
    if (oh, ow) == (rh, rw) {
        return ImageTensor::new(oriented);
    }
    let mut resized = bilinear_resize(&Feat::from_array(&oriented), oh, ow);
    resized.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    debug_assert_eq!(resized.c, c);
    ImageTensor::new(resized.to_array())
}

/// Applies one random [`Transform`] drawn from `seed` to the image and every
/// label map.
pub fn augment(
    img: &ImageTensor,
    labels: &[LabelMap],
    seed: u64,
) -> Result<(ImageTensor, Vec<LabelMap>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Transform::sample(&mut rng);
    apply(img, labels, &t)
}

pub fn apply(
    img: &ImageTensor,
    labels: &[LabelMap],
    t: &Transform,
) -> Result<(ImageTensor, Vec<LabelMap>)> {
    let image = transform_image(img, t)?;
    let labels = labels
        .iter()
        .map(|l| transform_labels(l, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((image, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> LabelMap {
        LabelMap::new(
            Array2::from_shape_fn((h, w), |(y, x)| ((y * w + x) % 5) as u8),
            5,
        )
        .unwrap()
    }

    #[test]
    fn half_turn_twice_is_identity() {
        let l = ramp(5, 7);
        let t = Transform {
            rotation: Rotation::R180,
            ..Transform::IDENTITY
        };
        let once = transform_labels(&l, &t).unwrap();
        assert_ne!(once, l);
        assert_eq!(transform_labels(&once, &t).unwrap(), l);
    }

    #[test]
    fn quarter_turns_compose() {
        let l = ramp(4, 6);
        let q = Transform {
            rotation: Rotation::R90,
            ..Transform::IDENTITY
        };
        let tq = Transform {
            rotation: Rotation::R270,
            ..Transform::IDENTITY
        };
        let once = transform_labels(&l, &q).unwrap();
        assert_eq!(once.dim(), (6, 4));
        assert_eq!(transform_labels(&once, &tq).unwrap(), l);
        // Clockwise: the top-left corner moves to the top-right.
        assert_eq!(once.get(0, 3), l.get(0, 0));
    }

    #[test]
    fn identity_transform_changes_nothing() {
        let l = ramp(6, 6);
        let img = ImageTensor::new(Array3::from_shape_fn((3, 6, 6), |(c, y, x)| {
            ((c + y * x) % 7) as f64 / 7.0
        }))
        .unwrap();
        let (i2, l2) = apply(&img, std::slice::from_ref(&l), &Transform::IDENTITY).unwrap();
        assert_eq!(i2, img);
        assert_eq!(l2, vec![l]);
    }

    #[test]
    fn rescale_changes_size_consistently() {
        let l = ramp(20, 30);
        let img = ImageTensor::new(Array3::from_elem((1, 20, 30), 0.5)).unwrap();
        let t = Transform {
            flip: true,
            rotation: Rotation::R90,
            scale: 1.1,
        };
        let (i2, l2) = apply(&img, &[l.clone(), l], &t).unwrap();
        assert_eq!((i2.height(), i2.width()), (33, 22));
        assert!(l2.iter().all(|m| m.dim() == (33, 22)));
    }
}
