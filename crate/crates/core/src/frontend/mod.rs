//! Frontend: parser for the toy imperative language, lowering onto the
//! equation system, and loaders for the JSON side files.

pub mod ast;
mod formats;
mod lower;
mod parse;

pub use ast::Program;
pub use formats::{
    parse_bounds, parse_policy, parse_templates, write_policy, write_templates, TemplateSet,
};
pub use lower::{lower, LowerOutput};
pub use parse::parse;

use crate::frontend::ast::Loc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("syntax error at {loc}: {message}")]
    Syntax { loc: Loc, message: String },
    #[error("expression degree exceeds two at {loc}")]
    Degree { loc: Loc },
    #[error("undefined variable {name:?} at {loc}")]
    UndefinedVariable { name: String, loc: Loc },
    #[error("lowering error: {message}")]
    Lower { message: String },
    #[error("file format error: {0}")]
    Format(String),
}

impl FrontendError {
    pub(crate) fn syntax(loc: Loc, message: String) -> Self {
        FrontendError::Syntax { loc, message }
    }
}
