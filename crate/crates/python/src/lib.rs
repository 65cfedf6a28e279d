//! Python bindings: synthetic sequences, mesh I/O, encode, decode.

use std::collections::BTreeSet;

use bmkn_core::affine::CombinationMask;
use bmkn_core::codec::{decode_detailed, encode_sequence, GofConfig, UpAxis};
use bmkn_core::mesh::{self, BodyPart, MeshFormat, SegMode, Sequence};
use bmkn_core::rdopt::Strategy;
use bmkn_core::synth::{synthesize as synth, Scenario, SynthConfig};
use bmkn_core::Vec3;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A triangle mesh with optional per-vertex body-part ordinals.
#[pyclass(name = "Mesh", module = "bmkn", skip_from_py_object)]
#[derive(Clone)]
pub struct PyMesh {
    inner: mesh::Mesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    #[pyo3(signature = (vertices, faces, labels=None))]
    fn new(vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>, labels: Option<Vec<u8>>) -> PyResult<Self> {
        let labels = labels
            .map(|l| l.into_iter().map(|o| BodyPart::from_ordinal(o).ok_or_else(|| err(format!("label {o} is not a body part")))).collect::<PyResult<Vec<_>>>())
            .transpose()?;
        let inner = mesh::Mesh::new(vertices.into_iter().map(Vec3::from).collect(), faces, labels).map_err(err)?;
        Ok(PyMesh { inner })
    }

    #[getter]
    fn vertices(&self) -> Vec<[f64; 3]> {
        self.inner.vertices.iter().map(|v| [v.x, v.y, v.z]).collect()
    }

    #[getter]
    fn faces(&self) -> Vec<[u32; 3]> {
        self.inner.faces.clone()
    }

    #[getter]
    fn labels(&self) -> Option<Vec<u8>> {
        self.inner.labels.as_ref().map(|l| l.iter().map(|p| p.ordinal()).collect())
    }

    fn __len__(&self) -> usize {
        self.inner.vertex_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh({} vertices, {} faces, labeled={})",
            self.inner.vertex_count(),
            self.inner.faces.len(),
            self.inner.labels.is_some()
        )
    }
}

fn wrap(seq: Sequence) -> Vec<PyMesh> {
    seq.frames.into_iter().map(|inner| PyMesh { inner }).collect()
}

fn unwrap(frames: &[PyRef<'_, PyMesh>], fps: f64) -> PyResult<Sequence> {
    Sequence::new(frames.iter().map(|m| m.inner.clone()).collect(), fps).map_err(err)
}

/// `walker`, `swish` (torso amplitude) or `drift` (velocity along x).
fn scenario(name: &str, param: Option<f64>) -> PyResult<Scenario> {
    let s: Scenario = name.parse().map_err(err)?;
    Ok(match (s, param) {
        (Scenario::Swish { .. }, Some(a)) => Scenario::Swish { amplitude: a },
        (Scenario::Drift { .. }, Some(v)) => Scenario::Drift {
            velocity: Vec3::new(v, 0.0, 0.0),
        },
        (s, None) => s,
        (s, Some(_)) => return Err(err(format!("{s} takes no parameter"))),
    })
}

#[pyfunction]
#[pyo3(signature = (name, frames=16, vertices=1000, seed=0, param=None))]
fn synthesize(name: &str, frames: usize, vertices: usize, seed: u64, param: Option<f64>) -> PyResult<Vec<PyMesh>> {
    let cfg = SynthConfig {
        frames,
        vertices,
        seed,
        ..SynthConfig::new(scenario(name, param)?)
    };
    Ok(wrap(synth(&cfg).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (directory, fps=30.0))]
fn load_sequence(directory: &str, fps: f64) -> PyResult<Vec<PyMesh>> {
    Ok(wrap(mesh::load_sequence(directory.as_ref(), fps).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (frames, directory, format="obj"))]
fn save_sequence(frames: Vec<PyRef<'_, PyMesh>>, directory: &str, format: &str) -> PyResult<Vec<String>> {
    let fmt: MeshFormat = format.parse().map_err(err)?;
    let paths = mesh::save_sequence(&unwrap(&frames, 30.0)?, directory.as_ref(), fmt).map_err(err)?;
    Ok(paths.into_iter().map(|p| p.display().to_string()).collect())
}

#[pyfunction]
fn rmse(a: PyRef<'_, PyMesh>, b: PyRef<'_, PyMesh>) -> PyResult<f64> {
    mesh::rmse_distortion(&a.inner, &b.inner).map_err(err)
}

#[allow(clippy::too_many_arguments)]
fn config(
    gof_size: usize,
    nodes: usize,
    lambda: f64,
    qstep_t: f64,
    qstep_p: f64,
    seg_mode: &str,
    affine_parts: Option<Vec<String>>,
    rd_strategy: &str,
    seg_corr: bool,
    pred_coding: bool,
    q: usize,
    seed: u64,
    up_axis: &str,
    force_mask: Option<&str>,
) -> bmkn_core::Result<GofConfig> {
    let mut cfg = GofConfig {
        gof_size,
        node_count: nodes,
        q,
        qstep_t,
        qstep_p,
        translation_predcode: pred_coding,
        force_mask: force_mask.map(str::parse::<CombinationMask>).transpose()?,
        seed,
        up_axis: up_axis.parse::<UpAxis>()?,
        ..GofConfig::default()
    };
    cfg.seg.mode = seg_mode.parse::<SegMode>()?;
    if let Some(parts) = affine_parts {
        cfg.seg.affine_parts = parts.iter().map(|p| p.parse()).collect::<bmkn_core::Result<BTreeSet<_>>>()?;
    }
    cfg.rd.lambda = lambda;
    cfg.rd.strategy = rd_strategy.parse::<Strategy>()?;
    cfg.solver.seg_corr_enabled = seg_corr;
    cfg.validate()?;
    Ok(cfg)
}

/// Encodes `frames`; returns the container bytes and a report dict with
/// per-GoF masks, byte counts and per-frame distortion.
#[pyfunction]
#[pyo3(signature = (
    frames, gof_size=8, nodes=24, lam=bmkn_core::rdopt::DEFAULT_LAMBDA, qstep_t=1e-3, qstep_p=1e-3,
    seg_mode="auto", affine_parts=None, rd_strategy="first-p", seg_corr=true, pred_coding=true,
    q=bmkn_core::deform::DEFAULT_Q, seed=0, up_axis="y", force_mask=None
))]
#[allow(clippy::too_many_arguments)]
fn encode<'py>(
    py: Python<'py>,
    frames: Vec<PyRef<'py, PyMesh>>,
    gof_size: usize,
    nodes: usize,
    lam: f64,
    qstep_t: f64,
    qstep_p: f64,
    seg_mode: &str,
    affine_parts: Option<Vec<String>>,
    rd_strategy: &str,
    seg_corr: bool,
    pred_coding: bool,
    q: usize,
    seed: u64,
    up_axis: &str,
    force_mask: Option<&str>,
) -> PyResult<(Bound<'py, PyBytes>, Bound<'py, PyDict>)> {
    let cfg = config(
        gof_size,
        nodes,
        lam,
        qstep_t,
        qstep_p,
        seg_mode,
        affine_parts,
        rd_strategy,
        seg_corr,
        pred_coding,
        q,
        seed,
        up_axis,
        force_mask,
    )
    .map_err(err)?;
    let seq = unwrap(&frames, 30.0)?;
    let enc = py.detach(|| encode_sequence(&seq, &cfg)).map_err(err)?;

    let report = PyDict::new(py);
    let masks: Vec<Option<String>> = enc.report.gofs.iter().map(|g| g.mask.map(|m| m.name())).collect();
    report.set_item("masks", masks)?;
    report.set_item("gof_bytes", enc.report.gofs.iter().map(|g| g.total_bytes()).collect::<Vec<_>>())?;
    report.set_item("motion_bytes", enc.report.motion_bytes())?;
    report.set_item("translation_bytes", enc.report.translation_bytes())?;
    report.set_item("mean_distortion", enc.report.mean_distortion())?;
    let per_frame: Vec<(usize, String, String, usize, f64)> = enc
        .report
        .pframes()
        .map(|p| (p.frame, p.mask.name(), p.mode.name().to_string(), p.bytes, p.distortion))
        .collect();
    report.set_item("pframes", per_frame)?;
    Ok((PyBytes::new(py, &enc.bytes), report))
}

/// Decodes a container into frames plus one `"I"` or `"P <mask> <mode>"`
/// tag per frame.
#[pyfunction]
fn decode(py: Python<'_>, data: &[u8]) -> PyResult<(Vec<PyMesh>, Vec<String>)> {
    let owned = data.to_vec();
    let dec = py.detach(|| decode_detailed(&owned)).map_err(err)?;
    let kinds = dec.frames.iter().map(|(_, k)| k.to_string()).collect();
    Ok((wrap(dec.sequence), kinds))
}

#[pymodule]
fn bmkn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(load_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(save_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    Ok(())
}
