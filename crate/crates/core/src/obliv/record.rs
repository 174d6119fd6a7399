//! Composite records moved as a unit by conditional copy and swap.

use crate::obliv::{ct_select, Predicate};
use crate::trace::TraceLog;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Scalar,
    /// Array field of the given byte length.
    Block(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Field {
    pub name: &'static str,
    pub kind: FieldKind,
}

impl Field {
    pub const fn scalar(name: &'static str) -> Self {
        Self {
            name,
            kind: FieldKind::Scalar,
        }
    }

    pub const fn block(name: &'static str, bytes: usize) -> Self {
        Self {
            name,
            kind: FieldKind::Block(bytes),
        }
    }
}

/// A fixed-layout record supporting whole-record conditional assignment and
/// swap. Implementations must touch every field regardless of the predicate.
pub trait OblRecord {
    /// `self := pred ? src : self`, field by field.
    fn cond_assign(&mut self, pred: Predicate, src: &Self);

    /// Exchange `a` and `b` iff `pred`.
    fn cond_swap(pred: Predicate, a: &mut Self, b: &mut Self);

    /// Fields in the fixed order they are copied.
    fn fields(&self) -> Vec<Field>;
}

/// Field-wise conditional copy. Emits one `Write` event per field whatever the
/// predicate; pred=0 rewrites `dst` with its own contents.
pub fn obl_copy_record<R: OblRecord>(log: &mut TraceLog, pred: Predicate, src: &R, dst: &mut R) {
    if log.is_enabled() {
        for f in dst.fields() {
            let len = match f.kind {
                FieldKind::Scalar => 1,
                FieldKind::Block(n) => n,
            };
            log.write(f.name, 0, len);
        }
    }
    dst.cond_assign(pred, src);
}

macro_rules! scalar_record {
    ($($t:ty),*) => {$(
        impl OblRecord for $t {
            #[inline(always)]
            fn cond_assign(&mut self, pred: Predicate, src: &Self) {
                *self = ct_select(pred, *src, *self);
            }
            #[inline(always)]
            fn cond_swap(pred: Predicate, a: &mut Self, b: &mut Self) {
                let (x, y) = (*a, *b);
                *a = ct_select(pred, y, x);
                *b = ct_select(pred, x, y);
            }
            fn fields(&self) -> Vec<Field> {
                vec![Field::scalar("value")]
            }
        }
    )*};
}

scalar_record!(u32, u64, f32);

impl<const N: usize> OblRecord for [u64; N] {
    #[inline(always)]
    fn cond_assign(&mut self, pred: Predicate, src: &Self) {
        for (d, s) in self.iter_mut().zip(src) {
            *d = ct_select(pred, *s, *d);
        }
    }

    #[inline(always)]
    fn cond_swap(pred: Predicate, a: &mut Self, b: &mut Self) {
        for (x, y) in a.iter_mut().zip(b.iter_mut()) {
            let (p, q) = (*x, *y);
            *x = ct_select(pred, q, p);
            *y = ct_select(pred, p, q);
        }
    }

    fn fields(&self) -> Vec<Field> {
        vec![Field::block("words", N * 8)]
    }
}
