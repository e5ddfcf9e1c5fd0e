//! Binary weight files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        4 bytes  "CSNW"
//! version      u32
//! head         u8       0 = classifier, 1 = simplex predictor
//! layer_count  u32
//! layer_dims   u32 x (layer_count + 1)
//! per layer:   fan_in*fan_out f64 weights (row-major, fan_in rows), fan_out f64 biases
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Head, Layer, Network};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"CSNW";
pub const WEIGHTS_VERSION: u32 = 1;

/// Refuse absurd dimensions before allocating.
const MAX_DIM: u32 = 1 << 20;

pub fn write_weights<W: Write>(net: &Network, mut out: W) -> Result<()> {
    let dims = net.layer_dims();
    out.write_all(&WEIGHTS_MAGIC)?;
    out.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    out.write_all(&[match net.head() {
        Head::Classifier => 0,
        Head::SimplexPredictor => 1,
    }])?;
    out.write_all(&(net.layers().len() as u32).to_le_bytes())?;
    for d in dims {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for layer in net.layers() {
        for v in layer.weights.iter().chain(&layer.bias) {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_weights(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + 8 * net.parameter_count());
    write_weights(net, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(field, "file truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, field: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, field)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn read_weights<R: Read>(mut input: R) -> Result<Network> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    if cur.take(4, "magic")? != WEIGHTS_MAGIC {
        return Err(Error::format("magic", "not a weight file"));
    }
    let version = cur.u32("version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported version {version}, expected {WEIGHTS_VERSION}"),
        ));
    }
    let head = match cur.take(1, "head")?[0] {
        0 => Head::Classifier,
        1 => Head::SimplexPredictor,
        other => return Err(Error::format("head", format!("unknown head tag {other}"))),
    };
    let count = cur.u32("layer_count")?;
    if count == 0 || count > 1024 {
        return Err(Error::format("layer_count", format!("implausible layer count {count}")));
    }
    let mut dims = Vec::with_capacity(count as usize + 1);
    for i in 0..=count as usize {
        let d = cur.u32(&format!("layer_dims[{i}]"))?;
        if d == 0 || d > MAX_DIM {
            return Err(Error::format(format!("layer_dims[{i}]"), format!("invalid width {d}")));
        }
        dims.push(d as usize);
    }
    let mut layers = Vec::with_capacity(count as usize);
    for (i, w) in dims.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = cur.f64s(fan_in * fan_out, &format!("layers[{i}].weights"))?;
        let bias = cur.f64s(fan_out, &format!("layers[{i}].bias"))?;
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::format(format!("layers[{i}]"), "non-finite parameter"));
        }
        layers.push(Layer {
            fan_in,
            fan_out,
            weights,
            bias,
        });
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(
            "trailer",
            format!("{} unexpected bytes after last layer", bytes.len() - cur.pos),
        ));
    }
    Network::from_layers(layers, head)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    read_weights(fs::File::open(path)?)
}
