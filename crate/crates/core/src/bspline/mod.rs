//! Cubic B-spline bases, tensor surfaces, fitting, and refinement.

mod basis;
mod fit;
pub(crate) mod surface;

pub use basis::{basis, CtrlMap, KnotBasis};
pub use surface::{BSplineSurface, Dir, SampleGrid};

/// Samples per direction for a control count of `q`: `alpha` samples per
/// control interval plus the closing one, floored at `div_min`.
pub fn div_count(q: usize, alpha: f64, div_min: usize) -> usize {
    assert!(q >= 1 && div_min >= 1 && alpha >= 0.0);
    let raw = (alpha * (q as f64 - 1.0) + 1.0).round() as usize;
    raw.max(div_min)
}

#[cfg(test)]
mod tests {
    use super::div_count;

    #[test]
    fn div_count_values() {
        assert_eq!(div_count(8, 2.0, 4), 15);
        assert_eq!(div_count(2, 2.0, 10), 10);
        assert_eq!(div_count(1, 2.0, 1), 1);
        assert_eq!(div_count(5, 1.5, 4), 7);
        assert_eq!(div_count(40, 2.0, 4), 79);
    }

    #[test]
    fn div_count_grows_with_controls() {
        let mut prev = 0;
        for q in 1..50 {
            let d = div_count(q, 2.0, 4);
            assert!(d >= prev);
            assert!(d >= q, "sampling must cover the control count");
            prev = d;
        }
    }
}
