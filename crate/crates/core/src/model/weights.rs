//! "MGW1" weight files.
//!
//! Layout: ASCII magic `MGW1\n`, then records until EOF. Each record is
//! `name_len: u16 LE`, UTF-8 name, `ndim: u32 LE`, `dims: u32 LE × ndim`,
//! payload `f32 LE × prod(dims)` in row-major order.
//!
//! Records written by this crate, in order:
//!
//! - `input_shape`: dims `[rank]`, payload the input dimensions
//! - `layers.{i}.dense.weight` `[out, in]` and `layers.{i}.dense.bias` `[out]`
//! - `layers.{i}.conv2d.weight` `[out_c, in_c, k, k]` and `layers.{i}.conv2d.bias` `[out_c]`
//! - `layers.{i}.softplus`: dims `[0]`, empty payload

use super::{Layer, ScoreModel};
use crate::error::{Error, Result};
use crate::io::ByteReader;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const WEIGHTS_MAGIC: &[u8; 5] = b"MGW1\n";

struct Record {
    name: String,
    dims: Vec<usize>,
    payload: Vec<f64>,
}

fn write_record(out: &mut impl Write, name: &str, dims: &[usize], payload: &[f64]) -> Result<()> {
    let name_len = u16::try_from(name.len())
        .map_err(|_| Error::Format(format!("record name too long: {name}")))?;
    out.write_all(&name_len.to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in payload {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn write_weights(model: &ScoreModel, out: &mut impl Write) -> Result<()> {
    out.write_all(WEIGHTS_MAGIC)?;
    let shape: Vec<f64> = model.input_shape().iter().map(|&d| d as f64).collect();
    write_record(out, "input_shape", &[shape.len()], &shape)?;
    for (i, layer) in model.layers().iter().enumerate() {
        match layer {
            Layer::Dense {
                inputs,
                outputs,
                weight,
                bias,
            } => {
                write_record(out, &format!("layers.{i}.dense.weight"), &[*outputs, *inputs], weight)?;
                write_record(out, &format!("layers.{i}.dense.bias"), &[*outputs], bias)?;
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                weight,
                bias,
                ..
            } => {
                write_record(
                    out,
                    &format!("layers.{i}.conv2d.weight"),
                    &[*out_channels, *in_channels, *kernel, *kernel],
                    weight,
                )?;
                write_record(out, &format!("layers.{i}.conv2d.bias"), &[*out_channels], bias)?;
            }
            Layer::Softplus => write_record(out, &format!("layers.{i}.softplus"), &[0], &[])?,
        }
    }
    Ok(())
}

pub fn save_weights(model: &ScoreModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_weights(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

fn parse_records(bytes: &[u8]) -> Result<Vec<Record>> {
    if !bytes.starts_with(WEIGHTS_MAGIC) {
        return Err(Error::Format("missing MGW1 magic header".into()));
    }
    let mut reader = ByteReader::new(&bytes[WEIGHTS_MAGIC.len()..]);
    let mut records = Vec::new();
    while !reader.is_empty() {
        let index = records.len();
        let bad = |what: &str, name: &str| Error::Format(format!("record {index} ('{name}'): {what}"));
        let name_len = reader.u16().ok_or_else(|| bad("truncated name length", "?"))? as usize;
        let name_bytes = reader.take(name_len).ok_or_else(|| bad("truncated name", "?"))?;
        let name = String::from_utf8(name_bytes.to_vec()).map_err(|_| bad("name is not UTF-8", "?"))?;
        let ndim = reader.u32().ok_or_else(|| bad("truncated ndim", &name))? as usize;
        if ndim > 8 {
            return Err(bad(&format!("implausible ndim {ndim}"), &name));
        }
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(reader.u32().ok_or_else(|| bad("truncated dims", &name))? as usize);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| bad("declared size overflows", &name))?;
        let payload = reader.f32s(count).ok_or_else(|| {
            bad(
                &format!("declared {count} values but only {} payload bytes remain", reader.remaining()),
                &name,
            )
        })?;
        if let Some(pos) = payload.iter().position(|v| !v.is_finite()) {
            return Err(bad(&format!("non-finite value at position {pos}"), &name));
        }
        records.push(Record { name, dims, payload });
    }
    Ok(records)
}

pub fn read_weights(bytes: &[u8]) -> Result<ScoreModel> {
    let records = parse_records(bytes)?;
    let mut iter = records.into_iter().enumerate().peekable();
    let bad = |i: usize, name: &str, what: String| Error::Format(format!("record {i} ('{name}'): {what}"));

    let (i, first) = iter
        .next()
        .ok_or_else(|| Error::Format("file has no records".into()))?;
    if first.name != "input_shape" || first.dims.len() != 1 {
        return Err(bad(i, &first.name, "expected 'input_shape' as the first record".into()));
    }
    let input_shape: Vec<usize> = first.payload.iter().map(|&v| v as usize).collect();
    if input_shape.is_empty() || input_shape.contains(&0) {
        return Err(bad(i, &first.name, format!("invalid input shape {input_shape:?}")));
    }
    let mut current = input_shape.clone();

    let mut layers = Vec::new();
    while let Some((i, rec)) = iter.next() {
        let li = layers.len();
        let kind = rec
            .name
            .strip_prefix(&format!("layers.{li}."))
            .ok_or_else(|| bad(i, &rec.name, format!("expected a record for layer {li}")))?
            .to_string();
        let layer = match kind.as_str() {
            "softplus" => {
                if rec.dims != [0] {
                    return Err(bad(i, &rec.name, format!("softplus record must have dims [0], got {:?}", rec.dims)));
                }
                Layer::Softplus
            }
            "dense.weight" | "conv2d.weight" => {
                let (bi, bias) = iter
                    .next()
                    .ok_or_else(|| bad(i, &rec.name, "missing bias record".into()))?;
                let expected_bias = format!("layers.{li}.{}.bias", kind.trim_end_matches(".weight"));
                if bias.name != expected_bias {
                    return Err(bad(bi, &bias.name, format!("expected '{expected_bias}'")));
                }
                if kind == "dense.weight" {
                    let [outputs, inputs] = rec.dims[..] else {
                        return Err(bad(i, &rec.name, format!("dense weight needs 2 dims, got {:?}", rec.dims)));
                    };
                    let have: usize = current.iter().product();
                    if inputs != have {
                        return Err(bad(i, &rec.name, format!("expects {inputs} inputs but layer receives {have}")));
                    }
                    if bias.dims != [outputs] {
                        return Err(bad(bi, &bias.name, format!("bias dims {:?} != [{outputs}]", bias.dims)));
                    }
                    current = vec![outputs];
                    Layer::dense(inputs, outputs, rec.payload, bias.payload)
                        .map_err(|e| bad(i, &rec.name, e.to_string()))?
                } else {
                    let [out_c, in_c, k, k2] = rec.dims[..] else {
                        return Err(bad(i, &rec.name, format!("conv weight needs 4 dims, got {:?}", rec.dims)));
                    };
                    let [c, h, w] = current[..] else {
                        return Err(bad(i, &rec.name, format!("conv layer needs CHW input, has {current:?}")));
                    };
                    if k != k2 || in_c != c {
                        return Err(bad(i, &rec.name, format!("kernel dims {:?} incompatible with input {current:?}", rec.dims)));
                    }
                    if bias.dims != [out_c] {
                        return Err(bad(bi, &bias.name, format!("bias dims {:?} != [{out_c}]", bias.dims)));
                    }
                    current = vec![out_c, h, w];
                    Layer::conv2d(in_c, out_c, k, h, w, rec.payload, bias.payload)
                        .map_err(|e| bad(i, &rec.name, e.to_string()))?
                }
            }
            _ => return Err(bad(i, &rec.name, "unknown record kind".into())),
        };
        layers.push(layer);
    }
    ScoreModel::new(input_shape, layers).map_err(|e| Error::Format(format!("inconsistent model: {e}")))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ScoreModel> {
    read_weights(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{train_toy, Architecture, Dataset, ToyTask};
    use crate::numerics::{gaussian_sample, SeededRng};

    fn fixture() -> ScoreModel {
        let task = ToyTask::new(Dataset::TwoGaussians);
        train_toy(&task, &Architecture::mlp(), &SeededRng::new(7)).unwrap()
    }

    fn bytes(model: &ScoreModel) -> Vec<u8> {
        let mut buf = Vec::new();
        write_weights(model, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_exact() {
        let model = fixture();
        let loaded = read_weights(&bytes(&model)).unwrap();
        assert_eq!(loaded, model);
        let mut rng = SeededRng::new(5);
        for _ in 0..100 {
            let x = gaussian_sample(&mut rng, &[2], 2.0).unwrap();
            assert_eq!(model.forward(&x).unwrap(), loaded.forward(&x).unwrap());
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let buf = bytes(&fixture());
        for cut in [3, 10, buf.len() - 1, buf.len() - 7] {
            let err = read_weights(&buf[..cut]).unwrap_err();
            assert!(matches!(err, Error::Format(_)), "{err}");
        }
    }

    #[test]
    fn mismatched_declared_length_is_rejected() {
        let mut buf = Vec::new();
        buf.extend_from_slice(WEIGHTS_MAGIC);
        write_record(&mut buf, "input_shape", &[1], &[2.0]).unwrap();
        write_record(&mut buf, "layers.0.dense.weight", &[2, 2], &[1.0, 0.0, 0.0]).unwrap();
        let err = read_weights(&buf).unwrap_err().to_string();
        assert!(err.contains("layers.0.dense.weight"), "{err}");

        // declared shape disagrees with the layer chain
        let mut buf = Vec::new();
        buf.extend_from_slice(WEIGHTS_MAGIC);
        write_record(&mut buf, "input_shape", &[1], &[3.0]).unwrap();
        write_record(&mut buf, "layers.0.dense.weight", &[2, 2], &[1.0, 0.0, 0.0, 1.0]).unwrap();
        write_record(&mut buf, "layers.0.dense.bias", &[2], &[0.0, 0.0]).unwrap();
        assert!(matches!(read_weights(&buf), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_is_rejected() {
        assert!(read_weights(b"MGT1\n").is_err());
    }
}
