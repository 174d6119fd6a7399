//! Data-oblivious building blocks: branch-free scalar ops, block selection,
//! whole-record conditional copy, bitonic sort, and top-3 window selection.

mod block;
mod max3;
mod prims;
mod record;
mod sort;

pub(crate) use block::{assign_f32s, swap_f32s};
pub use block::{chunk_schedule, obl_choose_block, obl_swap_block};
pub(crate) use max3::max3_untraced;
pub use max3::obl_max3_in_window;
pub use prims::{ct_eq, ct_gt, ct_select, obl_choose, obl_compare, obl_gt, ObliviousScalar, Predicate};
pub use record::{obl_copy_record, Field, FieldKind, OblRecord};
pub use sort::{exchange_count, obl_sort, obl_sort_dir, SortKey};
