//! Bounded model checker for MJB, a compact Java-like stack bytecode language.
//!
//! The pipeline: [`frontend`] parses MJB text into a class model, [`gotoc`]
//! lowers it to a guarded-goto program (virtual dispatch and exceptions become
//! branches, runtime checks become properties), [`symex`] unwinds loops and
//! calls up to a bound and renames to SSA, [`bvflat`] bit-blasts the
//! verification condition to CNF, [`satcore`] decides it with an embedded CDCL
//! solver, and [`strsolve`] handles string constraints through an
//! instantiation/refinement loop. [`cex`] turns satisfying assignments into
//! replayable traces and [`interp`] is the concrete reference interpreter used
//! as a differential oracle. [`driver`] ties the passes together behind the
//! CLI.

pub mod bvflat;
pub mod cex;
pub mod driver;
pub mod expr;
pub mod frontend;
pub mod gotoc;
pub mod interp;
pub mod satcore;
pub mod strsolve;
pub mod symex;
