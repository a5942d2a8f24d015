//! File formats and synthetic datasets.
//!
//! Everything here works in `f64`; convert afterwards if another scalar type
//! is needed.

mod datasets;
mod dense;
mod idx;
mod market;
mod problem_file;

pub use datasets::{gen_circles, Circles};
pub use dense::{read_dense, read_labels, write_dense_csv, write_labels};
pub use idx::{load_idx, load_idx_labels, parse_idx, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use market::{parse_matrix_market, read_matrix_market, write_matrix_market};
pub use problem_file::{load_problem, ProblemFile};
