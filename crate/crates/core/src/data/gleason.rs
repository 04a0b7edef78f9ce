//! Gleason-style raw annotation codes.
//!
//! Raw maps use codes 0, 1, 3, 4, 5 and 6. Codes 0, 1 and 6 are benign; 3, 4
//! and 5 are Gleason grades 3, 4 and 5.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::types::LabelMap;

pub const GLEASON_CLASSES: usize = 4;

/// All annotators of the fully covered images.
pub const ALL_EXPERTS: [&str; 6] = ["1", "2", "3", "4", "5", "6"];

/// Annotators shared by every training/validation image.
pub const TRAIN_EXPERTS: [&str; 3] = ["1", "3", "4"];

fn remap_code(code: u8) -> Option<u8> {
    match code {
        0 | 1 | 6 => Some(0),
        3 => Some(1),
        4 => Some(2),
        5 => Some(3),
        _ => None,
    }
}

/// Benign → 0, grade 3 → 1, grade 4 → 2, grade 5 → 3. Codes outside
/// {0, 1, 3, 4, 5, 6} are rejected at the first offending pixel (row-major).
pub fn remap_gleason(raw: ArrayView2<'_, u8>) -> Result<LabelMap> {
    let mut out = raw.to_owned();
    for ((row, col), v) in out.indexed_iter_mut() {
        *v = remap_code(*v).ok_or(Error::GleasonLabel {
            value: *v,
            row,
            col,
        })?;
    }
    LabelMap::new(out, GLEASON_CLASSES)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn benign_codes_map_to_zero() {
        for code in [0, 1, 6] {
            let m = remap_gleason(Array2::from_elem((3, 3), code).view()).unwrap();
            assert!(m.data().iter().all(|&v| v == 0));
        }
    }

    #[test]
    fn grades_map_in_order() {
        let raw = Array2::from_shape_vec((1, 3), vec![3, 4, 5]).unwrap();
        let m = remap_gleason(raw.view()).unwrap();
        assert_eq!(m.data().as_slice().unwrap(), &[1, 2, 3]);
        assert_eq!(m.num_classes(), 4);
    }

    #[test]
    fn code_two_is_rejected_with_position() {
        let mut raw = Array2::from_elem((4, 4), 3u8);
        raw[[2, 1]] = 2;
        raw[[3, 3]] = 9;
        match remap_gleason(raw.view()) {
            Err(Error::GleasonLabel { value, row, col }) => {
                assert_eq!((value, row, col), (2, 2, 1))
            }
            other => panic!("unexpected {other:?}"),
        }
        let raw = Array2::from_elem((1, 1), 7u8);
        assert!(remap_gleason(raw.view()).is_err());
    }

    #[test]
    fn output_range_is_four_classes() {
        let raw = Array2::from_shape_vec((1, 6), vec![0, 1, 3, 4, 5, 6]).unwrap();
        let once = remap_gleason(raw.view()).unwrap();
        assert_eq!(once.data().as_slice().unwrap(), &[0, 0, 1, 2, 3, 0]);
        assert_eq!(once, remap_gleason(raw.view()).unwrap());
        // The remapped codes are not raw codes: 2 is rejected outright.
        assert!(remap_gleason(once.data().view()).is_err());
    }
}
