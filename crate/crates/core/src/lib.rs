pub mod align;
pub mod autocal;
pub mod compensate;
pub mod domain;
pub mod fever;
pub mod image;
pub mod pipeline;
pub mod simkit;
pub mod track;
