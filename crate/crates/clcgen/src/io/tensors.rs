//! Named `f64` arrays in the safetensors container, with a JSON manifest in
//! the header metadata.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use crate::error::{Error, Result};
use crate::io::manifest::write_bytes;

const MANIFEST_KEY: &str = "manifest";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

fn bad(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{}: {e}", path.display()))
}

pub fn write_tensors(path: &Path, tensors: &BTreeMap<String, Tensor>, manifest: &str) -> Result<()> {
    let bytes: Vec<(String, Vec<usize>, Vec<u8>)> = tensors
        .iter()
        .map(|(name, t)| {
            let raw = t.data.iter().flat_map(|x| x.to_le_bytes()).collect();
            (name.clone(), t.shape.clone(), raw)
        })
        .collect();
    let views = bytes
        .iter()
        .map(|(name, shape, raw)| {
            TensorView::new(Dtype::F64, shape.clone(), raw)
                .map(|v| (name.clone(), v))
                .map_err(|e| bad(path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = HashMap::from([(MANIFEST_KEY.to_string(), manifest.to_string())]);
    let out = safetensors::tensor::serialize(views, &Some(meta)).map_err(|e| bad(path, e))?;
    write_bytes(path, &out)
}

pub fn read_tensors(path: &Path) -> Result<(BTreeMap<String, Tensor>, String)> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let (_, meta) = SafeTensors::read_metadata(&bytes).map_err(|e| bad(path, e))?;
    let manifest = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get(MANIFEST_KEY))
        .cloned()
        .ok_or_else(|| bad(path, "no manifest in header"))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| bad(path, e))?;
    let mut out = BTreeMap::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F64 {
            return Err(bad(path, format!("tensor {name} is {:?}, expected F64", view.dtype())));
        }
        let data = view
            .data()
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        out.insert(
            name,
            Tensor {
                shape: view.shape().to_vec(),
                data,
            },
        );
    }
    Ok((out, manifest))
}
