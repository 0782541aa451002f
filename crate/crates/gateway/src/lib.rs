//! Operator gateway for the workflow engine: a read model of the state, an
//! HTTP API with a server-sent event stream, and the `archemist` command line.

pub mod api;
pub mod cli;
pub mod view;
