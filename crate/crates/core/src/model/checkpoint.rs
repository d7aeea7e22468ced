//! JSON checkpoints: a hyperparameter block plus one record per tensor with
//! an explicit shape and row-major values. Every number is written with 17
//! significant digits so a save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::params::{GnnParams, Nonlinearity, Readout, WdGnnParams};
use crate::error::{Error, Result};
use crate::graph::FilterTaps;

const FORMAT: &str = "wdgnn-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Hyper<N> {
    in_features: usize,
    hidden: usize,
    out_features: usize,
    wide_order: usize,
    deep_orders: Vec<usize>,
    deep_widths: Vec<usize>,
    nonlinearity: Nonlinearity,
    alpha_d: N,
    alpha_w: N,
    beta: N,
}

#[derive(Serialize, Deserialize)]
struct Tensor<N> {
    name: String,
    shape: Vec<usize>,
    values: Vec<N>,
}

#[derive(Serialize, Deserialize)]
struct File<N> {
    format: String,
    version: u32,
    hyperparameters: Hyper<N>,
    tensors: Vec<Tensor<N>>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

fn num(v: f64) -> Box<RawValue> {
    RawValue::from_string(format!("{v:.16e}")).expect("finite float formats as a JSON number")
}

fn tensor2(name: String, a: &Array2<f64>) -> Tensor<Box<RawValue>> {
    Tensor {
        name,
        shape: vec![a.nrows(), a.ncols()],
        values: a.iter().copied().map(num).collect(),
    }
}

pub fn to_json(p: &WdGnnParams, metadata: &BTreeMap<String, String>) -> Result<String> {
    p.validate()?;
    let mut deep_widths = vec![p.deep.in_features()];
    deep_widths.extend(p.deep.layers.iter().map(FilterTaps::out_features));
    let mut tensors = Vec::new();
    for (l, layer) in p.deep.layers.iter().enumerate() {
        for (k, t) in layer.taps().iter().enumerate() {
            tensors.push(tensor2(format!("deep.{l}.tap.{k}"), t));
        }
    }
    for (k, t) in p.wide.taps().iter().enumerate() {
        tensors.push(tensor2(format!("wide.tap.{k}"), t));
    }
    tensors.push(tensor2("readout.weight".into(), &p.readout.weight));
    tensors.push(Tensor {
        name: "readout.bias".into(),
        shape: vec![p.readout.bias.len()],
        values: p.readout.bias.iter().copied().map(num).collect(),
    });
    let file = File {
        format: FORMAT.into(),
        version: VERSION,
        hyperparameters: Hyper {
            in_features: p.in_features(),
            hidden: p.hidden(),
            out_features: p.out_features(),
            wide_order: p.wide.order(),
            deep_orders: p.deep.layers.iter().map(FilterTaps::order).collect(),
            deep_widths,
            nonlinearity: p.deep.nonlinearity,
            alpha_d: num(p.alpha_d),
            alpha_w: num(p.alpha_w),
            beta: num(p.beta),
        },
        tensors,
        metadata: metadata.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<(WdGnnParams, BTreeMap<String, String>)> {
    let file: File<f64> = serde_json::from_str(text)?;
    if file.format != FORMAT || file.version != VERSION {
        return Err(Error::parse(
            "checkpoint",
            format!("unsupported format {:?} version {}", file.format, file.version),
        ));
    }
    let h = &file.hyperparameters;
    if h.deep_widths.len() != h.deep_orders.len() + 1 {
        return Err(Error::parse(
            "checkpoint",
            "deep_widths must have one more entry than deep_orders",
        ));
    }
    let mut tensors: BTreeMap<String, Tensor<f64>> = file.tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
    let mut take2 = |name: String, rows: usize, cols: usize| -> Result<Array2<f64>> {
        let t = tensors
            .remove(&name)
            .ok_or_else(|| Error::parse("checkpoint", format!("missing tensor {name}")))?;
        if t.shape != [rows, cols] {
            return Err(Error::parse(
                "checkpoint",
                format!("tensor {name} has shape {:?}, expected [{rows}, {cols}]", t.shape),
            ));
        }
        Array2::from_shape_vec((rows, cols), t.values).map_err(|e| Error::parse("checkpoint", e.to_string()))
    };

    let mut layers = Vec::new();
    for (l, &order) in h.deep_orders.iter().enumerate() {
        let taps = (0..=order)
            .map(|k| take2(format!("deep.{l}.tap.{k}"), h.deep_widths[l], h.deep_widths[l + 1]))
            .collect::<Result<Vec<_>>>()?;
        layers.push(FilterTaps::new(taps)?);
    }
    let wide = FilterTaps::new(
        (0..=h.wide_order)
            .map(|k| take2(format!("wide.tap.{k}"), h.in_features, h.hidden))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let weight = take2("readout.weight".into(), h.hidden, h.out_features)?;
    let bias = tensors
        .remove("readout.bias")
        .ok_or_else(|| Error::parse("checkpoint", "missing tensor readout.bias"))?;
    if bias.shape != [h.out_features] {
        return Err(Error::parse("checkpoint", "readout.bias has the wrong shape"));
    }
    if let Some(name) = tensors.keys().next() {
        return Err(Error::parse("checkpoint", format!("unexpected tensor {name}")));
    }
    let params = WdGnnParams::new(
        GnnParams::new(layers, h.nonlinearity)?,
        wide,
        h.alpha_d,
        h.alpha_w,
        h.beta,
        Readout {
            weight,
            bias: Array1::from(bias.values),
        },
    )?;
    Ok((params, file.metadata))
}

pub fn save(path: &Path, p: &WdGnnParams, metadata: &BTreeMap<String, String>) -> Result<()> {
    std::fs::write(path, to_json(p, metadata)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(WdGnnParams, BTreeMap<String, String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
