//! Compiles the guide under `book/src` so its snippets run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/meta-engine.md")]
pub mod meta_engine {}
#[doc = include_str!("../../../book/src/documents.md")]
pub mod documents {}
#[doc = include_str!("../../../book/src/seeds.md")]
pub mod seeds {}
#[doc = include_str!("../../../book/src/instructions.md")]
pub mod instructions {}
#[doc = include_str!("../../../book/src/judges.md")]
pub mod judges {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/contamination.md")]
pub mod contamination {}
#[doc = include_str!("../../../book/src/runs.md")]
pub mod runs {}
