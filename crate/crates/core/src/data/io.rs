//! PNG reading and writing for images and label maps.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::{ImageTensor, LabelMap};

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn save<P, C>(img: &image::ImageBuffer<P, C>, path: &Path) -> Result<()>
where
    P: image::Pixel + image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Grey PNGs load as one channel, everything else as RGB.
pub fn read_image(path: &Path) -> Result<ImageTensor> {
    let img = open(path)?;
    Ok(match img.color().channel_count() {
        1 | 2 => ImageTensor::from_gray8(&img.to_luma8()),
        _ => ImageTensor::from_rgb8(&img.to_rgb8()),
    })
}

pub fn write_image(img: &ImageTensor, path: &Path) -> Result<()> {
    save(&img.to_rgb8(), path)
}

/// Raw 8-bit codes of a single-channel PNG.
pub fn read_raw_labels(path: &Path) -> Result<Array2<u8>> {
    let img = open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
        img.get_pixel(x as u32, y as u32)[0]
    }))
}

pub fn read_labels(path: &Path, num_classes: usize) -> Result<LabelMap> {
    LabelMap::new(read_raw_labels(path)?, num_classes)
}

pub fn write_labels(labels: &LabelMap, path: &Path) -> Result<()> {
    save(&labels.to_gray8(), path)
}

pub fn write_gray16(data: &Array2<u16>, path: &Path) -> Result<()> {
    let (h, w) = data.dim();
    let img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
            image::Luma([data[[y as usize, x as usize]]])
        });
    save(&img, path)
}

pub fn write_rgb(img: &image::RgbImage, path: &Path) -> Result<()> {
    save(img, path)
}

pub fn read_rgb(path: &Path) -> Result<image::RgbImage> {
    Ok(open(path)?.to_rgb8())
}
