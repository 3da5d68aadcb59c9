//! Self-describing network container: a textual header naming each layer's
//! kind and hyperparameters, followed by the parameters as little-endian
//! 32-bit floats in header order.

use std::io::Write;

use super::{Layer, Network, NnError};

/// Writes one network section: `network <name>` / layer lines / `params <n>`
/// / raw f32 payload.
pub fn write_network(out: &mut impl Write, name: &str, net: &Network) -> std::io::Result<()> {
    writeln!(out, "network {name}")?;
    writeln!(out, "layers {}", net.layers.len())?;
    for layer in &net.layers {
        match layer {
            Layer::Dense { weight, .. } => {
                writeln!(out, "dense in={} out={}", weight.shape()[1], weight.shape()[0])?;
            }
            Layer::Conv2d { weight, stride, .. } => writeln!(
                out,
                "conv2d in={} out={} kernel={} stride={stride}",
                weight.shape()[1],
                weight.shape()[0],
                weight.shape()[2],
            )?,
            other => writeln!(out, "{}", other.kind_name())?,
        }
    }
    let params = net.params_to_vec();
    writeln!(out, "params {}", params.len())?;
    let mut payload = Vec::with_capacity(params.len() * 4);
    for v in params {
        payload.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&payload)
}

/// Byte cursor over a serialized container, mixing line-oriented headers
/// with raw payloads.
pub struct SliceReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> SliceReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn is_at_end(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    pub fn read_line(&mut self) -> Result<&'a str, NnError> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| NnError::Serialization("unterminated header line".into()))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end])
            .map_err(|_| NnError::Serialization("non-utf8 header line".into()))
    }

    pub fn read_exact(&mut self, len: usize) -> Result<&'a [u8], NnError> {
        if self.pos + len > self.bytes.len() {
            return Err(NnError::Serialization(format!(
                "payload truncated: wanted {len} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }
}

fn parse_kv(field: &str, key: &str) -> Result<usize, NnError> {
    let (k, v) = field
        .split_once('=')
        .ok_or_else(|| NnError::Serialization(format!("malformed field '{field}'")))?;
    if k != key {
        return Err(NnError::Serialization(format!(
            "expected '{key}=', found '{field}'"
        )));
    }
    v.parse()
        .map_err(|_| NnError::Serialization(format!("bad integer in '{field}'")))
}

/// Reads one network section written by [`write_network`].
pub fn read_network(reader: &mut SliceReader) -> Result<(String, Network), NnError> {
    let header = reader.read_line()?;
    let name = header
        .strip_prefix("network ")
        .ok_or_else(|| NnError::Serialization(format!("expected 'network', got '{header}'")))?
        .to_string();
    let count_line = reader.read_line()?;
    let layer_count: usize = count_line
        .strip_prefix("layers ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| NnError::Serialization(format!("bad layer count '{count_line}'")))?;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let line = reader.read_line()?;
        let mut fields = line.split_whitespace();
        let kind = fields
            .next()
            .ok_or_else(|| NnError::Serialization("empty layer line".into()))?;
        let layer = match kind {
            "dense" => {
                let in_dim = parse_kv(fields.next().unwrap_or(""), "in")?;
                let out_dim = parse_kv(fields.next().unwrap_or(""), "out")?;
                Layer::new_dense(in_dim, out_dim)
            }
            "conv2d" => {
                let in_ch = parse_kv(fields.next().unwrap_or(""), "in")?;
                let out_ch = parse_kv(fields.next().unwrap_or(""), "out")?;
                let kernel = parse_kv(fields.next().unwrap_or(""), "kernel")?;
                let stride = parse_kv(fields.next().unwrap_or(""), "stride")?;
                Layer::new_conv2d(in_ch, out_ch, kernel, stride)
            }
            "relu" => Layer::Relu,
            "sigmoid" => Layer::Sigmoid,
            "softplus" => Layer::Softplus,
            "gap" => Layer::GlobalAvgPool,
            other => {
                return Err(NnError::Serialization(format!("unknown layer '{other}'")));
            }
        };
        layers.push(layer);
    }
    let mut net = Network::new(layers);
    let params_line = reader.read_line()?;
    let count: usize = params_line
        .strip_prefix("params ")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| NnError::Serialization(format!("bad params line '{params_line}'")))?;
    if count != net.param_count() {
        return Err(NnError::Serialization(format!(
            "payload declares {count} params, layers need {}",
            net.param_count()
        )));
    }
    let payload = reader.read_exact(count * 4)?;
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    net.load_params(&values)?;
    Ok((name, net))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::he_xavier_init;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    #[test]
    fn round_trip_preserves_structure_and_values() {
        let mut net = Network::new(vec![
            Layer::new_conv2d(3, 4, 3, 2),
            Layer::Relu,
            Layer::GlobalAvgPool,
            Layer::new_dense(4, 2),
            Layer::Softplus,
        ]);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(21);
        he_xavier_init(&mut net, &mut rng);
        let mut bytes = Vec::new();
        write_network(&mut bytes, "encoder", &net).unwrap();
        let mut reader = SliceReader::new(&bytes);
        let (name, back) = read_network(&mut reader).unwrap();
        assert_eq!(name, "encoder");
        assert!(reader.is_at_end());
        assert_eq!(back.layers.len(), net.layers.len());
        for (a, b) in net.params_to_vec().iter().zip(back.params_to_vec()) {
            assert!((a - b).abs() <= a.abs() * 1e-6 + 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn truncated_payload_rejected() {
        let net = Network::new(vec![Layer::new_dense(4, 4)]);
        let mut bytes = Vec::new();
        write_network(&mut bytes, "n", &net).unwrap();
        bytes.truncate(bytes.len() - 3);
        let mut reader = SliceReader::new(&bytes);
        assert!(read_network(&mut reader).is_err());
    }

    #[test]
    fn unknown_layer_rejected() {
        let bytes = b"network x\nlayers 1\nbatchnorm\nparams 0\n".to_vec();
        let mut reader = SliceReader::new(&bytes);
        assert!(read_network(&mut reader).is_err());
    }
}
