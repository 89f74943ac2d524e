//! On-disk artifact container.
//!
//! An artifact file is a deflate-compressed zip archive holding
//! `manifest.json` and one flat little-endian blob per array. The manifest
//! records the metadata and, for every blob, its dtype, shape and file name:
//!
//! ```json
//! {
//!   "format_version": "lutkan/1",
//!   "L": 64, "K": 8, "E": 80, "d": 10, "m": 8,
//!   "scheme": "symmetric", "dtype": "int8", "param_dtype": "float32",
//!   "value_repr": "spline_component", "interp": "linear",
//!   "boundary_mode": "closed", "oob_policy": "clip_x", "base_kind": "silu",
//!   "knots":   {"dtype": "float32", "shape": [9],         "file": "knots.bin"},
//!   "q_table": {"dtype": "int8",    "shape": [80, 8, 64], "file": "q_table.bin"},
//!   ...
//! }
//! ```
//!
//! Archives are byte-deterministic: fixed entry order, fixed timestamps and
//! permissions, fixed compression level, sorted manifest keys.

use std::fs::{self, File};
use std::io::{Cursor, Read, Seek, Write};
use std::path::{Path, PathBuf};

use half::f16;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use crate::artifact::{ArtifactParts, EdgeScalars, LutLayerArtifact, QTable, FORMAT_VERSION};
use crate::config::{
    BoundaryMode, Interp, OobConfig, OobPolicy, ParamDtype, QuantDtype, Scheme, ValueRepr,
};
use crate::error::{Error, Result};
use crate::spline::BaseKind;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MODEL_MANIFEST_NAME: &str = "manifest.json";
const COMPRESSION_LEVEL: i64 = 6;
const EDGE_SCALAR_BLOBS: [&str; 3] = ["edge_base_scale", "edge_spline_scale", "edge_out_scale"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlobDtype {
    Int8,
    Uint8,
    Float16,
    Float32,
}

impl BlobDtype {
    fn as_str(self) -> &'static str {
        match self {
            BlobDtype::Int8 => "int8",
            BlobDtype::Uint8 => "uint8",
            BlobDtype::Float16 => "float16",
            BlobDtype::Float32 => "float32",
        }
    }

    fn size(self) -> usize {
        match self {
            BlobDtype::Int8 | BlobDtype::Uint8 => 1,
            BlobDtype::Float16 => 2,
            BlobDtype::Float32 => 4,
        }
    }

    fn of_param(d: ParamDtype) -> Self {
        match d {
            ParamDtype::F32 => BlobDtype::Float32,
            ParamDtype::F16 => BlobDtype::Float16,
        }
    }

    fn of_quant(d: QuantDtype) -> Self {
        match d {
            QuantDtype::Int8 => BlobDtype::Int8,
            QuantDtype::Uint8 => BlobDtype::Uint8,
        }
    }
}

struct Blob {
    name: &'static str,
    dtype: BlobDtype,
    shape: Vec<usize>,
    bytes: Vec<u8>,
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn f16_bytes(values: &[f32]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| f16::from_f32(v).to_le_bytes())
        .collect()
}

fn param_bytes(values: &[f32], dtype: ParamDtype) -> Vec<u8> {
    match dtype {
        ParamDtype::F32 => f32_bytes(values),
        ParamDtype::F16 => f16_bytes(values),
    }
}

fn blobs_of(art: &LutLayerArtifact) -> Vec<Blob> {
    let e = art.edge_count();
    let k = art.segments();
    let l = art.samples();
    let pd = art.param_dtype();
    let q_bytes = match art.q_table() {
        QTable::Int8(q) => q.iter().flat_map(|v| v.to_le_bytes()).collect(),
        QTable::Uint8(q) => q.clone(),
    };
    let mut blobs = vec![
        Blob {
            name: "knots",
            dtype: BlobDtype::Float32,
            shape: vec![k + 1],
            bytes: f32_bytes(art.knots()),
        },
        Blob {
            name: "q_table",
            dtype: BlobDtype::of_quant(art.dtype()),
            shape: vec![e, k, l],
            bytes: q_bytes,
        },
        Blob {
            name: "scale",
            dtype: BlobDtype::of_param(pd),
            shape: vec![e, k],
            bytes: param_bytes(art.scale(), pd),
        },
        Blob {
            name: "y_min",
            dtype: BlobDtype::of_param(pd),
            shape: vec![e, k],
            bytes: param_bytes(art.y_min(), pd),
        },
    ];
    if let Some(s) = art.edge_scalars() {
        for (name, v) in
            EDGE_SCALAR_BLOBS
                .iter()
                .zip([&s.base_scale, &s.spline_scale, &s.out_scale])
        {
            blobs.push(Blob {
                name,
                dtype: BlobDtype::Float32,
                shape: vec![e],
                bytes: f32_bytes(v),
            });
        }
    }
    blobs
}

fn manifest_of(art: &LutLayerArtifact, blobs: &[Blob]) -> Value {
    let mut m = Map::new();
    m.insert("format_version".into(), json!(FORMAT_VERSION));
    m.insert("value_repr".into(), json!(art.value_repr().as_str()));
    m.insert("interp".into(), json!(art.interp().as_str()));
    m.insert("boundary_mode".into(), json!(art.boundary_mode().as_str()));
    m.insert("oob_policy".into(), json!(art.oob_policy().as_str()));
    m.insert("scheme".into(), json!(art.scheme().as_str()));
    m.insert("dtype".into(), json!(art.dtype().as_str()));
    m.insert("param_dtype".into(), json!(art.param_dtype().as_str()));
    m.insert("L".into(), json!(art.samples()));
    m.insert("K".into(), json!(art.segments()));
    m.insert("E".into(), json!(art.edge_count()));
    m.insert("d".into(), json!(art.in_dim()));
    m.insert("m".into(), json!(art.out_dim()));
    if let Some(s) = art.edge_scalars() {
        m.insert("base_kind".into(), json!(s.base_kind.as_str()));
    }
    for b in blobs {
        m.insert(
            b.name.into(),
            json!({"dtype": b.dtype.as_str(), "shape": b.shape, "file": format!("{}.bin", b.name)}),
        );
    }
    Value::Object(m)
}

fn file_options() -> SimpleFileOptions {
    SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .compression_level(Some(COMPRESSION_LEVEL))
        .last_modified_time(DateTime::default())
        .unix_permissions(0o644)
}

fn archive_err(e: impl std::fmt::Display) -> Error {
    Error::CorruptArchive(e.to_string())
}

/// Write an artifact archive to any seekable sink.
pub fn write_artifact<W: Write + Seek>(art: &LutLayerArtifact, sink: W) -> Result<W> {
    let blobs = blobs_of(art);
    let manifest = serde_json::to_vec_pretty(&manifest_of(art, &blobs))?;
    let mut zip = ZipWriter::new(sink);
    let opts = file_options();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        zip.start_file(name, opts).map_err(archive_err)?;
        zip.write_all(bytes).map_err(archive_err)
    };
    put(MANIFEST_NAME, &manifest)?;
    for b in &blobs {
        put(&format!("{}.bin", b.name), &b.bytes)?;
    }
    zip.finish().map_err(archive_err)
}

pub fn artifact_to_bytes(art: &LutLayerArtifact) -> Result<Vec<u8>> {
    Ok(write_artifact(art, Cursor::new(Vec::new()))?.into_inner())
}

pub fn save_artifact(art: &LutLayerArtifact, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = artifact_to_bytes(art)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_entry<R: Read + Seek>(zip: &mut ZipArchive<R>, name: &str) -> Result<Option<Vec<u8>>> {
    let mut f = match zip.by_name(name) {
        Ok(f) => f,
        Err(zip::result::ZipError::FileNotFound) => return Ok(None),
        Err(e) => return Err(archive_err(e)),
    };
    let mut buf = Vec::with_capacity(f.size() as usize);
    f.read_to_end(&mut buf).map_err(archive_err)?;
    Ok(Some(buf))
}

struct Manifest(Map<String, Value>);

impl Manifest {
    fn get(&self, key: &str) -> Result<&Value> {
        self.0
            .get(key)
            .ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    fn string(&self, key: &str) -> Result<&str> {
        self.get(key)?
            .as_str()
            .ok_or_else(|| Error::InvalidArtifact(format!("`{key}` must be a string")))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.get(key)?.as_u64().map(|v| v as usize).ok_or_else(|| {
            Error::InvalidArtifact(format!("`{key}` must be a non-negative integer"))
        })
    }

    fn parse<T: std::str::FromStr<Err = Error>>(&self, key: &str) -> Result<T> {
        self.string(key)?.parse()
    }
}

fn blob_spec(man: &Manifest, name: &str) -> Result<(String, Vec<usize>, String)> {
    let desc = man
        .get(name)?
        .as_object()
        .ok_or_else(|| Error::InvalidArtifact(format!("`{name}` must be a blob descriptor")))?;
    let field = |key: &str| {
        desc.get(key)
            .ok_or_else(|| Error::MissingKey(format!("{name}.{key}")))
    };
    let dtype = field("dtype")?
        .as_str()
        .ok_or_else(|| Error::InvalidArtifact(format!("`{name}.dtype` must be a string")))?
        .to_string();
    let shape = field("shape")?
        .as_array()
        .and_then(|a| {
            a.iter()
                .map(|v| v.as_u64().map(|n| n as usize))
                .collect::<Option<Vec<_>>>()
        })
        .ok_or_else(|| {
            Error::InvalidArtifact(format!("`{name}.shape` must be a list of integers"))
        })?;
    let file = field("file")?
        .as_str()
        .ok_or_else(|| Error::InvalidArtifact(format!("`{name}.file` must be a string")))?
        .to_string();
    Ok((dtype, shape, file))
}

fn load_blob<R: Read + Seek>(
    zip: &mut ZipArchive<R>,
    man: &Manifest,
    name: &str,
    dtype: BlobDtype,
    shape: &[usize],
) -> Result<Vec<u8>> {
    let (found_dtype, found_shape, file) = blob_spec(man, name)?;
    if found_dtype != dtype.as_str() {
        return Err(Error::InvalidArtifact(format!(
            "`{name}.dtype` is {found_dtype}, expected {}",
            dtype.as_str()
        )));
    }
    if found_shape != shape {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            expected: shape.to_vec(),
            found: found_shape,
        });
    }
    let bytes = read_entry(zip, &file)?.ok_or_else(|| Error::CorruptBlob {
        name: name.to_string(),
        reason: format!("entry `{file}` not found in archive"),
    })?;
    let want = shape.iter().product::<usize>() * dtype.size();
    if bytes.len() != want {
        return Err(Error::CorruptBlob {
            name: name.to_string(),
            reason: format!("expected {want} bytes, found {}", bytes.len()),
        });
    }
    Ok(bytes)
}

fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

fn decode_f16(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(2)
        .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
        .collect()
}

fn decode_params(bytes: &[u8], dtype: ParamDtype) -> Vec<f32> {
    match dtype {
        ParamDtype::F32 => decode_f32(bytes),
        ParamDtype::F16 => decode_f16(bytes),
    }
}

/// Read and validate an artifact archive.
pub fn read_artifact<R: Read + Seek>(source: R) -> Result<LutLayerArtifact> {
    let mut zip = ZipArchive::new(source).map_err(archive_err)?;
    let raw = read_entry(&mut zip, MANIFEST_NAME)?
        .ok_or_else(|| Error::CorruptArchive(format!("no {MANIFEST_NAME} entry")))?;
    let man = match serde_json::from_slice::<Value>(&raw)? {
        Value::Object(m) => Manifest(m),
        _ => {
            return Err(Error::InvalidArtifact(
                "manifest must be a JSON object".into(),
            ))
        }
    };

    let version = man.string("format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version.to_string()));
    }
    let value_repr: ValueRepr = man.parse("value_repr")?;
    let interp: Interp = man.parse("interp")?;
    let boundary_mode: BoundaryMode = man.parse("boundary_mode")?;
    let oob_policy: OobPolicy = man.parse("oob_policy")?;
    let scheme: Scheme = man.parse("scheme")?;
    let dtype: QuantDtype = man.parse("dtype")?;
    let param_dtype: ParamDtype = man.parse("param_dtype")?;
    let l = man.usize("L")?;
    let k = man.usize("K")?;
    let e = man.usize("E")?;
    let d = man.usize("d")?;
    let m = man.usize("m")?;
    if e != d * m {
        return Err(Error::InvalidArtifact(format!(
            "E = {e} but d * m = {}",
            d * m
        )));
    }
    if dtype != scheme.dtype() {
        return Err(Error::InvalidArtifact(format!(
            "scheme {scheme} requires dtype {}, manifest says {dtype}",
            scheme.dtype()
        )));
    }

    let knots = decode_f32(&load_blob(
        &mut zip,
        &man,
        "knots",
        BlobDtype::Float32,
        &[k + 1],
    )?);
    let q_bytes = load_blob(
        &mut zip,
        &man,
        "q_table",
        BlobDtype::of_quant(dtype),
        &[e, k, l],
    )?;
    let q_table = match dtype {
        QuantDtype::Int8 => QTable::Int8(q_bytes.iter().map(|&b| b as i8).collect()),
        QuantDtype::Uint8 => QTable::Uint8(q_bytes),
    };
    let pblob = BlobDtype::of_param(param_dtype);
    let scale = decode_params(
        &load_blob(&mut zip, &man, "scale", pblob, &[e, k])?,
        param_dtype,
    );
    let y_min = decode_params(
        &load_blob(&mut zip, &man, "y_min", pblob, &[e, k])?,
        param_dtype,
    );

    let edge_scalars = match value_repr {
        ValueRepr::Phi => {
            if let Some(key) = EDGE_SCALAR_BLOBS
                .iter()
                .chain(&["base_kind"])
                .find(|k| man.0.contains_key(**k))
            {
                return Err(Error::InvalidArtifact(format!(
                    "`{key}` is only valid for spline_component"
                )));
            }
            None
        }
        ValueRepr::SplineComponent => {
            let base_kind: BaseKind = man.parse("base_kind")?;
            let mut v = EDGE_SCALAR_BLOBS
                .iter()
                .map(|name| {
                    Ok(decode_f32(&load_blob(
                        &mut zip,
                        &man,
                        name,
                        BlobDtype::Float32,
                        &[e],
                    )?))
                })
                .collect::<Result<Vec<_>>>()?;
            let out_scale = v.pop().unwrap_or_default();
            let spline_scale = v.pop().unwrap_or_default();
            let base_scale = v.pop().unwrap_or_default();
            Some(EdgeScalars {
                base_kind,
                base_scale,
                spline_scale,
                out_scale,
            })
        }
    };

    LutLayerArtifact::from_parts(ArtifactParts {
        in_dim: d,
        out_dim: m,
        samples: l,
        knots,
        q_table,
        scale,
        y_min,
        scheme,
        param_dtype,
        value_repr,
        interp,
        oob: OobConfig::new(boundary_mode, oob_policy),
        edge_scalars,
    })
}

pub fn artifact_from_bytes(bytes: &[u8]) -> Result<LutLayerArtifact> {
    read_artifact(Cursor::new(bytes))
}

pub fn load_artifact(path: impl AsRef<Path>) -> Result<LutLayerArtifact> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_artifact(std::io::BufReader::new(file))
}

/// File name of layer `index` inside a model directory.
pub fn layer_file_name(index: usize) -> String {
    format!("layer_{index:03}.lut")
}

/// Save a layer chain as `dir/layer_000.lut, ...` plus `dir/manifest.json`.
pub fn save_lut_model(
    artifacts: &[LutLayerArtifact],
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(artifacts.len());
    let mut names = Vec::with_capacity(artifacts.len());
    for (i, art) in artifacts.iter().enumerate() {
        let name = layer_file_name(i);
        let path = dir.join(&name);
        save_artifact(art, &path)?;
        paths.push(path);
        names.push(name);
    }
    let manifest = json!({"format_version": FORMAT_VERSION, "layers": names});
    let path = dir.join(MODEL_MANIFEST_NAME);
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(paths)
}

/// Load a chain saved by [`save_lut_model`], or a single `.lut` file.
pub fn load_lut_model(path: impl AsRef<Path>) -> Result<Vec<LutLayerArtifact>> {
    let path = path.as_ref();
    if path.is_file() {
        return Ok(vec![load_artifact(path)?]);
    }
    let mpath = path.join(MODEL_MANIFEST_NAME);
    let raw = fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let man = match serde_json::from_slice::<Value>(&raw)? {
        Value::Object(m) => Manifest(m),
        _ => {
            return Err(Error::InvalidArtifact(
                "model manifest must be a JSON object".into(),
            ))
        }
    };
    let version = man.string("format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version.to_string()));
    }
    let layers = man
        .get("layers")?
        .as_array()
        .ok_or_else(|| Error::InvalidArtifact("`layers` must be a list".into()))?;
    layers
        .iter()
        .enumerate()
        .map(|(index, v)| {
            let name = v
                .as_str()
                .ok_or_else(|| Error::InvalidArtifact("`layers` entries must be strings".into()))?;
            load_artifact(path.join(name)).map_err(|e| Error::Layer {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

pub fn save_report<T: Serialize>(report: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_report<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&raw)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile_layer;
    use crate::config::QuantConfig;
    use crate::spline::{EdgeParams, KanLayerSpec, KnotGrid};

    fn layer() -> KanLayerSpec {
        let grid = KnotGrid::uniform(-1.0, 1.0, 3, 2).unwrap();
        let edges = (0..6)
            .map(|e| EdgeParams {
                coeffs: (0..5)
                    .map(|r| ((e * 5 + r) as f64 * 0.7).cos() * 0.3)
                    .collect(),
                base_scale: 0.9,
                spline_scale: 1.1,
                out_scale: 1.0 + e as f64 * 0.01,
            })
            .collect();
        KanLayerSpec::new(2, 3, grid, edges, BaseKind::Silu).unwrap()
    }

    fn art(scheme: Scheme, pd: ParamDtype, repr: ValueRepr) -> LutLayerArtifact {
        let cfg = QuantConfig::new(8, scheme)
            .with_param_dtype(pd)
            .with_value_repr(repr);
        compile_layer(&layer(), &cfg, OobConfig::default()).unwrap()
    }

    fn rewrite(bytes: &[u8], f: impl Fn(&str, Vec<u8>) -> Option<Vec<u8>>) -> Vec<u8> {
        let mut zip = ZipArchive::new(Cursor::new(bytes)).unwrap();
        let names: Vec<String> = zip.file_names().map(String::from).collect();
        let mut out = ZipWriter::new(Cursor::new(Vec::new()));
        for name in names {
            let data = read_entry(&mut zip, &name).unwrap().unwrap();
            if let Some(data) = f(&name, data) {
                out.start_file(name, file_options()).unwrap();
                out.write_all(&data).unwrap();
            }
        }
        out.finish().unwrap().into_inner()
    }

    fn edit_manifest(bytes: &[u8], f: impl Fn(&mut Map<String, Value>)) -> Vec<u8> {
        rewrite(bytes, |name, data| {
            if name != MANIFEST_NAME {
                return Some(data);
            }
            let mut v: Value = serde_json::from_slice(&data).unwrap();
            f(v.as_object_mut().unwrap());
            Some(serde_json::to_vec(&v).unwrap())
        })
    }

    #[test]
    fn round_trip_all_variants() {
        for scheme in Scheme::ALL {
            for pd in ParamDtype::ALL {
                for repr in ValueRepr::ALL {
                    let a = art(*scheme, *pd, *repr);
                    let b = artifact_from_bytes(&artifact_to_bytes(&a).unwrap()).unwrap();
                    assert_eq!(a, b);
                    assert_eq!(
                        a.scale().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.scale().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                    );
                }
            }
        }
    }

    #[test]
    fn bytes_are_deterministic() {
        let a = art(
            Scheme::Asymmetric,
            ParamDtype::F16,
            ValueRepr::SplineComponent,
        );
        assert_eq!(
            artifact_to_bytes(&a).unwrap(),
            artifact_to_bytes(&a.clone()).unwrap()
        );
    }

    #[test]
    fn manifest_contents() {
        let a = art(
            Scheme::Symmetric,
            ParamDtype::F32,
            ValueRepr::SplineComponent,
        );
        let bytes = artifact_to_bytes(&a).unwrap();
        let mut zip = ZipArchive::new(Cursor::new(&bytes)).unwrap();
        let man: Value =
            serde_json::from_slice(&read_entry(&mut zip, MANIFEST_NAME).unwrap().unwrap()).unwrap();
        assert_eq!(man["scheme"], "symmetric");
        assert_eq!(man["dtype"], "int8");
        assert_eq!(man["format_version"], "lutkan/1");
        assert_eq!(man["base_kind"], "silu");
        for key in [
            "value_repr",
            "interp",
            "boundary_mode",
            "oob_policy",
            "L",
            "edge_out_scale",
        ] {
            assert!(man.get(key).is_some(), "{key}");
        }
        let q = read_entry(&mut zip, "q_table.bin").unwrap().unwrap();
        assert_eq!(q.len(), 6 * 3 * 8);

        let phi = art(Scheme::Symmetric, ParamDtype::F32, ValueRepr::Phi);
        let bytes = artifact_to_bytes(&phi).unwrap();
        let mut zip = ZipArchive::new(Cursor::new(&bytes)).unwrap();
        let man: Value =
            serde_json::from_slice(&read_entry(&mut zip, MANIFEST_NAME).unwrap().unwrap()).unwrap();
        assert!(man.get("base_kind").is_none() && man.get("edge_base_scale").is_none());
    }

    #[test]
    fn truncated_blob_is_corrupt_blob() {
        let a = art(Scheme::Symmetric, ParamDtype::F32, ValueRepr::Phi);
        let bytes = rewrite(&artifact_to_bytes(&a).unwrap(), |name, mut data| {
            if name == "scale.bin" {
                data.truncate(data.len() - 3);
            }
            Some(data)
        });
        assert!(
            matches!(artifact_from_bytes(&bytes), Err(Error::CorruptBlob { name, .. }) if name == "scale")
        );

        let bytes = rewrite(&artifact_to_bytes(&a).unwrap(), |name, data| {
            (name != "knots.bin").then_some(data)
        });
        assert!(matches!(
            artifact_from_bytes(&bytes),
            Err(Error::CorruptBlob { .. })
        ));
    }

    #[test]
    fn truncated_archive_is_corrupt_archive() {
        let a = art(Scheme::Symmetric, ParamDtype::F32, ValueRepr::Phi);
        let bytes = artifact_to_bytes(&a).unwrap();
        let err = artifact_from_bytes(&bytes[..bytes.len() / 2]).unwrap_err();
        assert_eq!(err.kind(), "corrupt_archive");
    }

    #[test]
    fn manifest_errors_are_distinct() {
        let a = art(
            Scheme::Symmetric,
            ParamDtype::F32,
            ValueRepr::SplineComponent,
        );
        let bytes = artifact_to_bytes(&a).unwrap();

        let b = edit_manifest(&bytes, |m| {
            m.insert("boundary_mode".into(), json!("sideways"));
        });
        match artifact_from_bytes(&b) {
            Err(Error::UnknownVariant { field, value }) => {
                assert_eq!(field, "boundary_mode");
                assert_eq!(value, "sideways");
            }
            other => panic!("{other:?}"),
        }

        let b = edit_manifest(&bytes, |m| {
            m.insert("format_version".into(), json!("lutkan/2"));
        });
        assert!(
            matches!(artifact_from_bytes(&b), Err(Error::UnsupportedVersion(v)) if v == "lutkan/2")
        );

        let b = edit_manifest(&bytes, |m| {
            m.remove("oob_policy");
        });
        assert!(matches!(artifact_from_bytes(&b), Err(Error::MissingKey(k)) if k == "oob_policy"));

        let b = edit_manifest(&bytes, |m| {
            m.remove("edge_spline_scale");
        });
        assert!(
            matches!(artifact_from_bytes(&b), Err(Error::MissingKey(k)) if k == "edge_spline_scale")
        );

        let b = edit_manifest(&bytes, |m| {
            m["q_table"]["shape"] = json!([6, 3, 9]);
        });
        assert!(matches!(
            artifact_from_bytes(&b),
            Err(Error::ShapeMismatch { .. })
        ));

        let b = edit_manifest(&bytes, |m| {
            m.insert("base_kind".into(), json!("relu"));
        });
        assert_eq!(
            artifact_from_bytes(&b).unwrap_err().kind(),
            "unsupported_base"
        );
    }

    #[test]
    fn model_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let arts = vec![
            art(Scheme::Symmetric, ParamDtype::F32, ValueRepr::Phi),
            art(
                Scheme::Asymmetric,
                ParamDtype::F16,
                ValueRepr::SplineComponent,
            ),
        ];
        let paths = save_lut_model(&arts, dir.path()).unwrap();
        assert!(paths[1].ends_with("layer_001.lut"));
        assert_eq!(load_lut_model(dir.path()).unwrap(), arts);
        assert_eq!(load_lut_model(&paths[0]).unwrap(), arts[..1].to_vec());
        assert!(matches!(
            load_lut_model(dir.path().join("nope")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn report_round_trip() {
        #[derive(Debug, PartialEq, Serialize, serde::Deserialize)]
        struct R {
            seed: u64,
            mae: Option<f64>,
            name: String,
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let r = R {
            seed: 7,
            mae: Some(0.1 + 0.2),
            name: "x".into(),
        };
        save_report(&r, &p).unwrap();
        assert_eq!(load_report::<R>(&p).unwrap(), r);
    }
}
