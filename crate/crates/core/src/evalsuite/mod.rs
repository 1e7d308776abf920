//! Representation evaluation: cross-modal retrieval, linear probes, source
//! ablations, and a synthetic data generator.

mod ablation;
mod probe;
mod retrieval;
mod synthetic;

use std::io::Write;

use crate::error::Result;

pub use ablation::{ablation_run, probe_model, AblationConfig, AblationRow};
pub use probe::{linear_probe, probe_loss_grad, stratified_split, ProbeConfig, ProbeModel, ProbeReport};
pub use retrieval::{
    evaluate_retrieval, evaluate_retrieval_all, own_ranks, summarize_ranks, RetrievalReport, SourceRetrieval,
};
pub use synthetic::{generate_synthetic, SyntheticConfig, SyntheticData, SyntheticPaths};

pub fn write_retrieval_report<W: Write>(mut out: W, report: &RetrievalReport) -> Result<()> {
    for (i, s) in report.per_source.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        writeln!(out, "[retrieval]")?;
        writeln!(out, "source = {}", s.source)?;
        writeln!(out, "examples = {}", report.examples)?;
        writeln!(out, "recall_at_1 = {}", s.recall_at_1)?;
        writeln!(out, "recall_at_5 = {}", s.recall_at_5)?;
        writeln!(out, "recall_at_10 = {}", s.recall_at_10)?;
        writeln!(out, "median_rank = {}", s.median_rank)?;
    }
    out.flush()?;
    Ok(())
}

fn write_probe_fields<W: Write>(out: &mut W, r: &ProbeReport) -> Result<()> {
    writeln!(out, "classes = {}", r.classes)?;
    writeln!(out, "train_size = {}", r.train_size)?;
    writeln!(out, "test_size = {}", r.test_size)?;
    writeln!(out, "train_accuracy = {}", r.train_accuracy)?;
    writeln!(out, "test_accuracy = {}", r.test_accuracy)?;
    Ok(())
}

pub fn write_probe_report<W: Write>(mut out: W, report: &ProbeReport) -> Result<()> {
    writeln!(out, "[probe]")?;
    write_probe_fields(&mut out, report)?;
    out.flush()?;
    Ok(())
}

pub fn write_ablation_report<W: Write>(mut out: W, rows: &[AblationRow]) -> Result<()> {
    for (i, row) in rows.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        writeln!(out, "[ablation]")?;
        writeln!(out, "row = {}", row.label())?;
        write_probe_fields(&mut out, &row.report)?;
    }
    out.flush()?;
    Ok(())
}
