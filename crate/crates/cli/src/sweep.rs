use std::path::Path;

use bmkn_core::codec::{decode_sequence, encode_sequence};
use bmkn_core::mesh::rmse_distortion;
use rayon::prelude::*;

use crate::input::Input;
use crate::{CodecArgs, SynthArgs};

pub struct Grid {
    pub lambdas: Vec<f64>,
    pub qsteps_t: Vec<f64>,
    pub qsteps_p: Vec<f64>,
    pub node_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub scenario: String,
    pub lambda: f64,
    pub qstep_t: f64,
    pub qstep_p: f64,
    pub nodes: usize,
    /// Selected masks of all GoFs, joined by `+`.
    pub mask: String,
    pub rate_bytes: usize,
    /// Mean per-frame RMSE of the decoded sequence.
    pub rmse: f64,
}

impl Grid {
    fn points(&self) -> Vec<(f64, f64, f64, usize)> {
        let mut out = Vec::new();
        for &l in &self.lambdas {
            for &t in &self.qsteps_t {
                for &p in &self.qsteps_p {
                    for &n in &self.node_counts {
                        out.push((l, t, p, n));
                    }
                }
            }
        }
        out
    }
}

/// Encodes and decodes every grid point; rows come back sorted by rate.
pub fn evaluate(input: &str, grid: &Grid, synth: &SynthArgs, codec: &CodecArgs) -> Result<Vec<Row>, String> {
    let source = Input::parse(input)?;
    let seq = source.load(synth, codec.seed)?;
    let name = source.name();
    let mut rows: Vec<Row> = grid
        .points()
        .into_par_iter()
        .map(|(lambda, qstep_t, qstep_p, nodes)| {
            let args = CodecArgs {
                lambda,
                qstep_t,
                qstep_p,
                nodes,
                ..codec.clone()
            };
            let cfg = args.config()?;
            let enc = encode_sequence(&seq, &cfg).map_err(|e| e.to_string())?;
            let dec = decode_sequence(&enc.bytes).map_err(|e| e.to_string())?;
            let mut total = 0.0;
            for (a, b) in dec.frames.iter().zip(&seq.frames) {
                total += rmse_distortion(a, b).map_err(|e| e.to_string())?;
            }
            let masks: Vec<String> = enc.report.gofs.iter().filter_map(|g| g.mask.map(|m| m.name())).collect();
            Ok(Row {
                scenario: name.clone(),
                lambda,
                qstep_t,
                qstep_p,
                nodes,
                mask: if masks.is_empty() { "-".into() } else { masks.join("+") },
                rate_bytes: enc.bytes.len(),
                rmse: total / seq.len() as f64,
            })
        })
        .collect::<Result<_, String>>()?;
    rows.sort_by(|a, b| a.rate_bytes.cmp(&b.rate_bytes).then(a.rmse.total_cmp(&b.rmse)));
    Ok(rows)
}

pub fn run(input: &str, output: &Path, grid: &Grid, synth: &SynthArgs, codec: &CodecArgs) -> Result<(), String> {
    let rows = evaluate(input, grid, synth, codec)?;
    let mut w = csv::Writer::from_path(output).map_err(|e| format!("{}: {e}", output.display()))?;
    w.write_record(["scenario", "lambda", "qstep_t", "qstep_p", "nodes", "mask", "rate_bytes", "rmse"])
        .map_err(|e| e.to_string())?;
    for r in &rows {
        w.write_record([
            r.scenario.clone(),
            format!("{:e}", r.lambda),
            format!("{:e}", r.qstep_t),
            format!("{:e}", r.qstep_p),
            r.nodes.to_string(),
            r.mask.clone(),
            r.rate_bytes.to_string(),
            format!("{:.9e}", r.rmse),
        ])
        .map_err(|e| e.to_string())?;
        println!("{} lambda {:e} nodes {} mask {} {} bytes rmse {:.6e}", r.scenario, r.lambda, r.nodes, r.mask, r.rate_bytes, r.rmse);
    }
    w.flush().map_err(|e| e.to_string())?;
    Ok(())
}
