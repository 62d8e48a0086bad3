use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One named, contiguous block of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered, gap-free list of segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    total: usize,
}

impl Layout {
    /// Builds a layout by packing `(name, shape)` blocks back to back.
    pub fn from_blocks<S: Into<String>>(blocks: impl IntoIterator<Item = (S, Vec<usize>)>) -> Self {
        let mut offset = 0;
        let segments = blocks
            .into_iter()
            .map(|(name, shape)| {
                let seg = Segment {
                    name: name.into(),
                    shape,
                    offset,
                };
                offset += seg.len();
                seg
            })
            .collect();
        Self {
            segments,
            total: offset,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn range(&self, name: &str) -> Result<Range<usize>> {
        self.segment(name)
            .map(Segment::range)
            .ok_or_else(|| Error::InvalidArgument(format!("no segment named {name:?}")))
    }
}

/// Flat parameter (or gradient, or update) vector tagged with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector<T> {
    data: Vec<T>,
    layout: Arc<Layout>,
}

impl<T: Scalar> ParamVector<T> {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        Self {
            data: vec![T::zero(); layout.total()],
            layout,
        }
    }

    pub fn from_vec(layout: Arc<Layout>, data: Vec<T>) -> Result<Self> {
        if data.len() != layout.total() {
            return Err(Error::ShapeMismatch(format!(
                "layout covers {} values, got {}",
                layout.total(),
                data.len()
            )));
        }
        Ok(Self { data, layout })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn segment(&self, name: &str) -> Result<&[T]> {
        let r = self.layout.range(name)?;
        Ok(&self.data[r])
    }

    pub fn segment_mut(&mut self, name: &str) -> Result<&mut [T]> {
        let r = self.layout.range(name)?;
        Ok(&mut self.data[r])
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || *self.layout == *other.layout
    }

    pub fn ensure_same_layout(&self, other: &Self) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch)
        }
    }

    /// Euclidean norm, computed with rescaling so huge entries do not overflow.
    pub fn norm(&self) -> T {
        l2_norm(&self.data)
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.ensure_same_layout(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: T, x: &Self) -> Result<()> {
        self.ensure_same_layout(x)?;
        for (s, &v) in self.data.iter_mut().zip(&x.data) {
            *s = *s + a * v;
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(T::one(), other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-T::one(), other)?;
        Ok(out)
    }

    pub fn scale_in_place(&mut self, a: T) {
        for v in &mut self.data {
            *v = *v * a;
        }
    }

    pub fn scaled(&self, a: T) -> Self {
        let mut out = self.clone();
        out.scale_in_place(a);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Overflow-safe Euclidean norm.
pub(crate) fn l2_norm<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if max == T::zero() || !max.is_finite() {
        return max;
    }
    let ss: T = xs.iter().map(|&x| (x / max) * (x / max)).sum();
    max * ss.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> Arc<Layout> {
        Arc::new(Layout::from_blocks([
            ("a", vec![2, 3]),
            ("b", vec![4]),
            ("c", vec![1, 1, 2]),
        ]))
    }

    #[test]
    fn segments_are_contiguous_and_cover() {
        let l = layout();
        let mut expected = 0;
        for s in l.segments() {
            assert_eq!(s.offset, expected);
            expected += s.len();
        }
        assert_eq!(l.total(), expected);
        assert_eq!(l.total(), 12);
        assert_eq!(l.range("b").unwrap(), 6..10);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let a = ParamVector::<f64>::zeros(layout());
        let other = Arc::new(Layout::from_blocks([("a", vec![12])]));
        let b = ParamVector::<f64>::zeros(other);
        assert!(matches!(a.add(&b), Err(Error::LayoutMismatch)));
    }

    #[test]
    fn norm_survives_huge_entries() {
        let n = l2_norm(&[3e200f64, 4e200]);
        assert!((n / 5e200 - 1.0).abs() < 1e-12);
        assert_eq!(l2_norm::<f64>(&[0.0, 0.0]), 0.0);
    }
}
