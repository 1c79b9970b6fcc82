//! Self-describing checkpoint files.
//!
//! A text header of `key = value` lines names the architecture and lists every
//! parameter with its shape and element range, terminated by `end\n`. The raw
//! little-endian `f64` payload follows immediately. Loading rebuilds the model
//! from the header and overwrites every parameter, so values round-trip
//! bit for bit.

use std::fs;
use std::path::Path;

use super::{BlockOptions, BuildOptions, Evit, StageConfig, VariantSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &str = "EVIT-CHECKPOINT v1";

pub fn to_bytes(model: &Evit) -> Vec<u8> {
    let spec = &model.spec;
    let opts = &model.options;
    let mut header = format!("{MAGIC}\n");
    let mut line = |k: &str, v: String| header.push_str(&format!("{k} = {v}\n"));
    line("name", spec.name.clone());
    line("seed", opts.seed.to_string());
    line("stem_channels", spec.stem_channels.to_string());
    for (i, s) in spec.stages.iter().enumerate() {
        line(
            &format!("stage{}", i + 1),
            format!("{} {} {} {} {} {}", s.blocks, s.channels, s.heads, s.sfa_reduction, s.dfa_reduction, s.expansion),
        );
    }
    line("head_channels", spec.head_channels.to_string());
    line("num_classes", spec.num_classes.to_string());
    line("pattern", opts.block.pattern.to_string());
    line("ffn", opts.block.ffn.to_string());
    line("zero_head", opts.zero_head.to_string());
    let mut offset = 0;
    for (name, t) in model.params().iter() {
        let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        line("param", format!("{name} {} {offset} {}", dims.join("x"), t.numel()));
        offset += t.numel();
    }
    header.push_str("end\n");

    let mut bytes = header.into_bytes();
    bytes.reserve(offset * 8);
    for (_, t) in model.params().iter() {
        for v in t.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub fn save(model: &Evit, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Evit> {
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    from_bytes(&bytes, path)
}

struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Evit> {
    let err = |msg: String| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    };
    let end = bytes
        .windows(5)
        .position(|w| w == b"\nend\n")
        .ok_or_else(|| err("header terminator not found".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| err("header is not UTF-8".into()))?;
    let payload = &bytes[end + 5..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(err(format!("missing {MAGIC:?} header")));
    }
    let mut fields = std::collections::HashMap::new();
    let mut params = Vec::new();
    for l in lines {
        let (k, v) = l.split_once(" = ").ok_or_else(|| err(format!("malformed line {l:?}")))?;
        if k == "param" {
            let parts: Vec<&str> = v.split(' ').collect();
            let [name, shape, offset, len] = parts[..] else {
                return Err(err(format!("malformed param line {l:?}")));
            };
            let shape = shape.split('x').map(str::parse).collect::<Result<Vec<usize>, _>>().map_err(|e| err(format!("{name}: {e}")))?;
            let num = |s: &str| s.parse::<usize>().map_err(|e| err(format!("{name}: {e}")));
            params.push(ParamEntry {
                name: name.to_string(),
                shape,
                offset: num(offset)?,
                len: num(len)?,
            });
        } else {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| err(format!("missing field {k:?}")));
    fn parse<T: std::str::FromStr>(v: &str, k: &str, err: &dyn Fn(String) -> Error) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        v.parse().map_err(|e| err(format!("{k}: {e}")))
    }
    let stage = |i: usize| -> Result<StageConfig> {
        let k = format!("stage{i}");
        let v: Vec<&str> = get(&k)?.split(' ').collect();
        if v.len() != 6 {
            return Err(err(format!("{k}: expected 6 fields")));
        }
        Ok(StageConfig::new(
            parse(v[0], &k, &err)?,
            parse(v[1], &k, &err)?,
            parse(v[2], &k, &err)?,
            parse(v[3], &k, &err)?,
            parse(v[4], &k, &err)?,
            parse(v[5], &k, &err)?,
        ))
    };
    let spec = VariantSpec {
        name: get("name")?.clone(),
        stem_channels: parse(get("stem_channels")?, "stem_channels", &err)?,
        stages: [stage(1)?, stage(2)?, stage(3)?, stage(4)?],
        head_channels: parse(get("head_channels")?, "head_channels", &err)?,
        num_classes: parse(get("num_classes")?, "num_classes", &err)?,
    };
    let options = BuildOptions {
        seed: parse(get("seed")?, "seed", &err)?,
        block: BlockOptions {
            pattern: parse(get("pattern")?, "pattern", &err)?,
            ffn: parse(get("ffn")?, "ffn", &err)?,
        },
        zero_head: parse(get("zero_head")?, "zero_head", &err)?,
    };

    let mut model = Evit::build(&spec, options)?;
    if params.len() != model.params().len() {
        return Err(err(format!("{} parameters stored, architecture has {}", params.len(), model.params().len())));
    }
    for p in params {
        let expected = model.params().by_name(&p.name).ok_or_else(|| err(format!("unknown parameter {:?}", p.name)))?;
        if expected.shape() != p.shape.as_slice() || p.len != expected.numel() {
            return Err(err(format!("{}: stored shape {:?}, architecture expects {:?}", p.name, p.shape, expected.shape())));
        }
        let raw = payload
            .get(p.offset * 8..(p.offset + p.len) * 8)
            .ok_or_else(|| err(format!("{}: payload truncated", p.name)))?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        model.params_mut().set_by_name(&p.name, Tensor::new(p.shape, data)?)?;
    }
    Ok(model)
}
