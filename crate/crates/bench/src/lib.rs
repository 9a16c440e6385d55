//! Fixtures shared by the criterion benchmarks.

use reswd::harness::pair_data;
use reswd::SampleSet;

/// The pair used by every benchmark: 1024 points in three dimensions.
pub fn fixture() -> (SampleSet, SampleSet) {
    pair_data(0, 0, 3, 1024).expect("fixture pair")
}
