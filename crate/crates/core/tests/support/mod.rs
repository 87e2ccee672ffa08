#![allow(dead_code)]

pub mod exact_delaunay;
