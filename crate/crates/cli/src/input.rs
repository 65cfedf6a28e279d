use std::path::PathBuf;

use bmkn_core::mesh::{load_sequence, Sequence};
use bmkn_core::synth::{synthesize, Scenario, SynthConfig};
use bmkn_core::Vec3;

use crate::SynthArgs;

/// Where a sequence comes from: a frame directory or a synthetic scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Directory(PathBuf),
    Synthetic(Scenario),
}

impl Input {
    /// Existing directories win; otherwise `name[:params]` names a scenario.
    pub fn parse(s: &str) -> Result<Input, String> {
        let path = PathBuf::from(s);
        if path.is_dir() {
            return Ok(Input::Directory(path));
        }
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let mut scenario: Scenario = name
            .parse()
            .map_err(|_| format!("{s:?} is neither a directory nor a scenario (walker, swish, drift)"))?;
        if let Some(p) = params {
            let nums: Vec<f64> = p
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}")))
                .collect::<Result<_, _>>()?;
            scenario = match (scenario, nums.as_slice()) {
                (Scenario::Swish { .. }, [a]) => Scenario::Swish { amplitude: *a },
                (Scenario::Drift { .. }, [x, y, z]) => Scenario::Drift {
                    velocity: Vec3::new(*x, *y, *z),
                },
                _ => return Err(format!("{s:?}: wrong parameters for {name}")),
            };
        }
        Ok(Input::Synthetic(scenario))
    }

    pub fn name(&self) -> String {
        match self {
            Input::Directory(p) => p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into()),
            Input::Synthetic(s) => s.name().to_string(),
        }
    }

    pub fn load(&self, args: &SynthArgs, seed: u64) -> Result<Sequence, String> {
        match self {
            Input::Directory(dir) => load_sequence(dir, args.fps).map_err(|e| format!("{}: {e}", dir.display())),
            Input::Synthetic(scenario) => synthesize(&SynthConfig {
                frames: args.frames,
                vertices: args.vertices,
                seed,
                ..SynthConfig::new(*scenario)
            })
            .map_err(|e| e.to_string()),
        }
    }
}
