//! The narrative guide, compiled from the book chapters.
//!
//! Each submodule's documentation is the corresponding chapter of the book
//! in `book/`, included verbatim. Rustdoc compiles and runs the chapters'
//! code blocks as doc-tests, so the guide can never drift from the API it
//! describes.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/encoding.md")]
pub mod encoding {}

#[doc = include_str!("../../../book/src/encryption.md")]
pub mod encryption {}

#[doc = include_str!("../../../book/src/decomposition.md")]
pub mod decomposition {}

#[doc = include_str!("../../../book/src/shares.md")]
pub mod shares {}

#[doc = include_str!("../../../book/src/protocol.md")]
pub mod protocol {}

#[doc = include_str!("../../../book/src/dropout.md")]
pub mod dropout {}

#[doc = include_str!("../../../book/src/privacy.md")]
pub mod privacy {}

#[doc = include_str!("../../../book/src/scenarios.md")]
pub mod scenarios {}
