// mdbook cannot run Rust listings against a workspace crate, so every chapter
// is pulled in as a module doc and `cargo test --doc` runs the listings. One
// module per chapter keeps failures traceable to a file.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/gaussians.md")]
pub mod gaussians {}
#[doc = include_str!("src/training.md")]
pub mod training {}
#[doc = include_str!("src/subspaces.md")]
pub mod subspaces {}
#[doc = include_str!("src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("src/gradients.md")]
pub mod gradients {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
