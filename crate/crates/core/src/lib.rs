//! Entity resolution for declared company names.
//!
//! Declared filings are normalized, compared against official registry names
//! with string-similarity matchers and pluggable classifier backends, checked
//! for legal-form consistency and resolved as Accepted, Rejected or Doubtful.
//! Doubtful cases land in a persistent review queue served over HTTP.

pub mod classify;
pub mod cli;
pub mod entity_model;
pub mod evaluate;
pub mod legal_form;
pub mod pipeline;
pub mod review_api;
pub mod similarity;
pub mod text_normalize;
