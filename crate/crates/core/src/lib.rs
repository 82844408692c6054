//! A browser agent for legal information and online procedures.
//!
//! [`dom`] turns a page snapshot into an indexed registry of interactive
//! elements, [`browser`] drives Chromium over CDP and draws numbered marks on
//! screenshots, [`llm`] talks to chat-completions endpoints or replays
//! scripts, [`agent`] runs the plan/perceive/decide/act loop, and [`bench`]
//! scores task suites and builds reports. [`fixtures`] serves a local site
//! with verification endpoints for offline runs.

pub mod agent;
pub mod bench;
pub mod config;
pub mod browser;
pub mod dom;
pub mod fixtures;
pub mod llm;
