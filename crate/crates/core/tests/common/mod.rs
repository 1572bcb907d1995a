//! Shared test plumbing: the brute-force oracles live in the library's
//! `oracle` module so the `selftest` command can run them too.

#![allow(unused_imports)]

pub use peakflex::oracle::{
    random_bounded_lp, random_curve_lp, solve_dense, sos2_segment_enumeration_min,
    vertex_enumeration_min, XorShift,
};
