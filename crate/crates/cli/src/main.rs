mod input;
mod sweep;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use bmkn_core::affine::CombinationMask;
use bmkn_core::codec::{decode_detailed, encode_sequence, GofConfig, UpAxis};
use bmkn_core::mesh::{rmse_distortion, save_sequence, BodyPart, MeshFormat, SegMode};
use bmkn_core::rdopt::Strategy;
use clap::{Args, Parser, Subcommand};

use crate::input::Input;

#[derive(Parser)]
#[command(name = "bmkn", version, about = "Bi-modal key-node codec for dynamic mesh sequences")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a frame directory or synthetic scenario into a .bmkn file.
    Encode {
        /// Frame directory, or a synthetic scenario such as `walker`, `swish:0.3`, `drift:0.01,0,0`.
        input: String,
        #[arg(short, long)]
        output: PathBuf,
        /// Write every evaluated RD point as CSV.
        #[arg(long)]
        rd_log: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Decode a .bmkn file into a frame directory.
    Decode {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = "obj")]
        format: MeshFormat,
        /// Report per-frame RMSE against this frame directory or synthetic scenario.
        #[arg(long)]
        check: Option<String>,
        /// Seed for a synthetic `--check` reference.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Write a labeled synthetic sequence to a frame directory.
    Synthesize {
        /// `walker`, `swish[:amplitude]` or `drift[:vx,vy,vz]`.
        scenario: String,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value = "obj")]
        format: MeshFormat,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Encode over a parameter grid and write rate/RMSE rows as CSV.
    Sweep {
        input: String,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1e-6,1e-5,1e-4,1e-3")]
        lambdas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1e-3")]
        qsteps_t: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1e-3")]
        qsteps_p: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "24")]
        node_counts: Vec<usize>,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        codec: CodecArgs,
    },
}

#[derive(Args, Clone)]
struct SynthArgs {
    /// Frames for synthetic input.
    #[arg(long, default_value_t = 16)]
    frames: usize,
    /// Approximate vertex count for synthetic input.
    #[arg(long, default_value_t = 1000)]
    vertices: usize,
    /// Frame rate assumed for directory input.
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
}

#[derive(Args, Clone)]
struct CodecArgs {
    #[arg(long, default_value_t = 8)]
    gof_size: usize,
    #[arg(long, default_value_t = 24)]
    nodes: usize,
    #[arg(long, default_value_t = bmkn_core::rdopt::DEFAULT_LAMBDA)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    qstep_t: f64,
    #[arg(long, default_value_t = 1e-3)]
    qstep_p: f64,
    #[arg(long, default_value = "auto")]
    seg_mode: SegMode,
    /// Comma-separated body parts whose nodes are affine; `none` for all-rigid.
    #[arg(long, default_value = "torso")]
    affine_parts: String,
    #[arg(long, default_value = "first-p")]
    rd_strategy: Strategy,
    /// Skip segment-guided pre-alignment in correspondence search.
    #[arg(long)]
    no_seg_corr: bool,
    /// Code translations directly instead of predictively.
    #[arg(long)]
    no_pred_coding: bool,
    /// Nearest nodes per vertex.
    #[arg(long, default_value_t = bmkn_core::deform::DEFAULT_Q)]
    q: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "y")]
    up_axis: UpAxis,
    /// Weight of the neighbour-consistency term in the fit.
    #[arg(long, default_value_t = 1.0)]
    alpha_reg: f64,
    /// Weight of the orthogonality term on affine nodes.
    #[arg(long, default_value_t = 0.1)]
    alpha_orth: f64,
    /// Use this mask for every P-frame instead of RD selection.
    #[arg(long)]
    force_mask: Option<CombinationMask>,
}

impl CodecArgs {
    fn config(&self) -> Result<GofConfig, String> {
        let mut cfg = GofConfig {
            gof_size: self.gof_size,
            node_count: self.nodes,
            q: self.q,
            qstep_t: self.qstep_t,
            qstep_p: self.qstep_p,
            translation_predcode: !self.no_pred_coding,
            force_mask: self.force_mask,
            seed: self.seed,
            up_axis: self.up_axis,
            ..GofConfig::default()
        };
        cfg.seg.mode = self.seg_mode;
        cfg.seg.affine_parts = parse_parts(&self.affine_parts)?;
        cfg.rd.lambda = self.lambda;
        cfg.rd.strategy = self.rd_strategy;
        cfg.solver.seg_corr_enabled = !self.no_seg_corr;
        cfg.solver.alpha_reg = self.alpha_reg;
        cfg.solver.alpha_orth = self.alpha_orth;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn parse_parts(s: &str) -> Result<std::collections::BTreeSet<BodyPart>, String> {
    if s.trim().eq_ignore_ascii_case("none") || s.trim().is_empty() {
        return Ok(Default::default());
    }
    s.split(',').map(|p| p.trim().parse::<BodyPart>().map_err(|e| e.to_string())).collect()
}

fn encode(input: &str, output: PathBuf, rd_log: Option<PathBuf>, synth: &SynthArgs, codec: &CodecArgs) -> Result<(), String> {
    let cfg = codec.config()?;
    let seq = Input::parse(input)?.load(synth, codec.seed)?;
    let enc = encode_sequence(&seq, &cfg).map_err(|e| e.to_string())?;
    fs::write(&output, &enc.bytes).map_err(|e| format!("{}: {e}", output.display()))?;

    let per_frame = cfg.rd.strategy == Strategy::PerFrame;
    for g in &enc.report.gofs {
        let mask = g.mask.map_or("-".to_string(), |m| m.name());
        let d = if g.pframes.is_empty() {
            0.0
        } else {
            g.pframes.iter().map(|p| p.distortion).sum::<f64>() / g.pframes.len() as f64
        };
        println!(
            "gof {} frames {}..{} nodes {} affine {} mask {mask} bytes {} (I {} nodes {} motion {}) distortion {d:.6e}",
            g.index,
            g.first_frame,
            g.first_frame + g.frame_count,
            g.node_count,
            g.affine_nodes,
            g.total_bytes(),
            g.iframe_bytes,
            g.node_bytes,
            g.motion_bytes(),
        );
        for p in &g.pframes {
            let mask = if per_frame { format!(" mask {}", p.mask) } else { String::new() };
            println!(
                "  frame {}{mask} mode {} bytes {} (P {} T {}) distortion {:.6e}",
                p.frame,
                p.mode.name(),
                p.bytes,
                p.p_bytes,
                p.t_bytes,
                p.distortion
            );
        }
    }
    for (k, (rec, orig)) in enc.reconstruction.iter().zip(&seq.frames).enumerate() {
        println!("rmse {k} {:.15e}", rmse_distortion(rec, orig).map_err(|e| e.to_string())?);
    }
    println!("total {} bytes, {} frames", enc.bytes.len(), seq.len());

    if let Some(path) = rd_log {
        let mut w = csv::Writer::from_path(&path).map_err(|e| e.to_string())?;
        w.write_record(["gof", "frame", "mask", "rate_bytes", "distortion", "j", "selected"])
            .map_err(|e| e.to_string())?;
        for g in &enc.report.gofs {
            for p in &g.pframes {
                for pt in &p.rd {
                    w.write_record([
                        g.index.to_string(),
                        p.frame.to_string(),
                        pt.mask.name(),
                        pt.rate.to_string(),
                        format!("{:e}", pt.distortion),
                        format!("{:e}", pt.cost),
                        (pt.mask == p.mask).to_string(),
                    ])
                    .map_err(|e| e.to_string())?;
                }
            }
        }
        w.flush().map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn decode(input: PathBuf, output: Option<PathBuf>, format: MeshFormat, check: Option<String>, seed: u64, synth: &SynthArgs) -> Result<(), String> {
    let bytes = fs::read(&input).map_err(|e| format!("{}: {e}", input.display()))?;
    let dec = decode_detailed(&bytes).map_err(|e| e.to_string())?;
    let reference = match &check {
        Some(spec) => Some(Input::parse(spec)?.load(synth, seed)?),
        None => None,
    };
    if let Some(r) = &reference {
        if r.len() != dec.sequence.len() {
            return Err(format!("reference has {} frames, stream has {}", r.len(), dec.sequence.len()));
        }
    }
    for (k, (gof, kind)) in dec.frames.iter().enumerate() {
        match &reference {
            Some(r) => {
                let e = rmse_distortion(&dec.sequence.frames[k], &r.frames[k]).map_err(|e| e.to_string())?;
                println!("frame {k} gof {gof} {kind} rmse {e:.15e}");
            }
            None => println!("frame {k} gof {gof} {kind}"),
        }
    }
    if let Some(dir) = output {
        save_sequence(&dec.sequence, &dir, format).map_err(|e| e.to_string())?;
        println!("wrote {} frames to {}", dec.sequence.len(), dir.display());
    }
    Ok(())
}

fn synthesize(spec: &str, output: PathBuf, format: MeshFormat, synth: &SynthArgs, seed: u64) -> Result<(), String> {
    let input = Input::parse(spec)?;
    if !matches!(input, Input::Synthetic(_)) {
        return Err(format!("{spec:?} is not a synthetic scenario"));
    }
    let seq = input.load(synth, seed)?;
    let paths = save_sequence(&seq, &output, format).map_err(|e| e.to_string())?;
    println!("wrote {} frames of {} vertices to {}", paths.len(), seq.frames[0].vertex_count(), output.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Encode {
            input,
            output,
            rd_log,
            synth,
            codec,
        } => encode(&input, output, rd_log, &synth, &codec),
        Command::Decode {
            input,
            output,
            format,
            check,
            seed,
            synth,
        } => decode(input, output, format, check, seed, &synth),
        Command::Synthesize {
            scenario,
            output,
            format,
            seed,
            synth,
        } => synthesize(&scenario, output, format, &synth, seed),
        Command::Sweep {
            input,
            output,
            lambdas,
            qsteps_t,
            qsteps_p,
            node_counts,
            synth,
            codec,
        } => {
            let grid = sweep::Grid {
                lambdas,
                qsteps_t,
                qsteps_p,
                node_counts,
            };
            sweep::run(&input, &output, &grid, &synth, &codec)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bmkn: {e}");
            ExitCode::FAILURE
        }
    }
}
