//! Turns a task description into a scaffolded Blender panel.
//!
//! A chain of model calls ([`pipeline`]) produces editable artifacts that
//! assemble into a [`model::ScaffoldSpec`]. That spec is checked by
//! [`validate`] and compiled by [`codegen`] into an add-on whose behavior
//! [`session`] can simulate. [`store`] keeps a run on disk and plans re-runs
//! after hand edits; [`cli`] wires it all into the `scaffolder` binary.

pub mod cli;
pub mod codegen;
pub mod hash;
pub mod model;
pub mod parse;
pub mod pipeline;
pub mod prompt;
pub mod session;
pub mod stage;
pub mod store;
pub mod transport;
pub mod validate;

// The guide's snippets run as doctests.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/pipeline.md")]
mod book_pipeline {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/parsing.md")]
mod book_parsing {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/refinement.md")]
mod book_refinement {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/disclosure.md")]
mod book_disclosure {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/validation.md")]
mod book_validation {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/addon.md")]
mod book_addon {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
