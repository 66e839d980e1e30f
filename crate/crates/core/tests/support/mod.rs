#![allow(dead_code)]

pub mod comp;
pub mod fd;
pub mod hyph;
pub mod tiny;
