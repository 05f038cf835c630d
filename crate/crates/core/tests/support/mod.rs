//! Independent oracles shared by integration and acceptance tests.
#![allow(dead_code)]

pub mod moments;
pub mod schedule;
pub mod contracts;
