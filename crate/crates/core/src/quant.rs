//! Precision regimes, embedding quantization, and the per-node density law
//! `NodeSize = d*p + L + H` together with capacity projection arithmetic.

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1 TiB in binary accounting.
pub const TIB_BYTES: u64 = 1_099_511_627_776;

/// Extra serialized bytes an I8 embedding carries (scale + zero_point, f32 each).
pub const I8_SIDE_BYTES: u64 = 8;

/// Storage precision for embedding components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrecisionRegime {
    F64,
    F32,
    F16,
    I8,
}

impl PrecisionRegime {
    pub const ALL: [PrecisionRegime; 4] = [
        PrecisionRegime::F64,
        PrecisionRegime::F32,
        PrecisionRegime::F16,
        PrecisionRegime::I8,
    ];

    /// Bytes per embedding component (`p` in the density law).
    pub fn bytes_per_component(self) -> usize {
        match self {
            PrecisionRegime::F64 => 8,
            PrecisionRegime::F32 => 4,
            PrecisionRegime::F16 => 2,
            PrecisionRegime::I8 => 1,
        }
    }

    /// Wire code used in snapshot headers.
    pub fn code(self) -> u8 {
        match self {
            PrecisionRegime::F64 => 0,
            PrecisionRegime::F32 => 1,
            PrecisionRegime::F16 => 2,
            PrecisionRegime::I8 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(PrecisionRegime::F64),
            1 => Some(PrecisionRegime::F32),
            2 => Some(PrecisionRegime::F16),
            3 => Some(PrecisionRegime::I8),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrecisionRegime::F64 => "f64",
            PrecisionRegime::F32 => "f32",
            PrecisionRegime::F16 => "f16",
            PrecisionRegime::I8 => "i8",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f64" | "float64" => Some(PrecisionRegime::F64),
            "f32" | "float32" => Some(PrecisionRegime::F32),
            "f16" | "float16" => Some(PrecisionRegime::F16),
            "i8" | "int8" => Some(PrecisionRegime::I8),
            _ => None,
        }
    }
}

/// A fixed-dimension embedding stored under a precision regime.
///
/// The payload holds exactly `d * p` little-endian bytes. For I8 the
/// per-vector affine parameters (scale, zero_point) ride alongside and are
/// serialized as two extra f32s, accounted under metadata mass `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedEmbedding {
    pub precision: PrecisionRegime,
    pub payload: Vec<u8>,
    pub scale: f32,
    pub zero_point: f32,
}

impl QuantizedEmbedding {
    pub fn dim(&self) -> usize {
        self.payload.len() / self.precision.bytes_per_component()
    }

    /// Serialized embedding bytes including the I8 side channel.
    pub fn serialized_len(&self) -> usize {
        let side = if self.precision == PrecisionRegime::I8 {
            I8_SIDE_BYTES as usize
        } else {
            0
        };
        self.payload.len() + side
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFiniteComponent(i));
        }
    }
    Ok(())
}

/// Quantize a real vector under the given regime.
///
/// I8 uses per-vector affine quantization over `[min(v), max(v)]`:
/// `q = round((x - zero_point) / scale)` clamped to `[-127, 127]` with
/// `scale = (max - min) / 254` and `zero_point = (min + max) / 2`.
pub fn quantize(v: &[f64], regime: PrecisionRegime) -> Result<QuantizedEmbedding> {
    check_finite(v)?;
    let mut payload = Vec::with_capacity(v.len() * regime.bytes_per_component());
    let (mut scale, mut zero_point) = (0.0f32, 0.0f32);
    match regime {
        PrecisionRegime::F64 => {
            for &x in v {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        PrecisionRegime::F32 => {
            for &x in v {
                payload.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        PrecisionRegime::F16 => {
            for &x in v {
                payload.extend_from_slice(&f16::from_f64(x).to_le_bytes());
            }
        }
        PrecisionRegime::I8 => {
            let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if v.is_empty() || max == min {
                zero_point = if v.is_empty() { 0.0 } else { min as f32 };
                payload.resize(v.len(), 0);
            } else {
                let s = (max - min) / 254.0;
                let zp = (min + max) / 2.0;
                scale = s as f32;
                zero_point = zp as f32;
                for &x in v {
                    let q = ((x - zp) / s).round().clamp(-127.0, 127.0) as i8;
                    payload.push(q as u8);
                }
            }
        }
    }
    Ok(QuantizedEmbedding {
        precision: regime,
        payload,
        scale,
        zero_point,
    })
}

/// Reconstruct the real vector. Exact for F64, error-bounded otherwise.
pub fn dequantize(qe: &QuantizedEmbedding) -> Result<Vec<f64>> {
    let p = qe.precision.bytes_per_component();
    if qe.payload.len() % p != 0 {
        return Err(Error::CorruptPayload {
            expected: (qe.payload.len() / p) * p,
            got: qe.payload.len(),
        });
    }
    let d = qe.payload.len() / p;
    let mut out = Vec::with_capacity(d);
    match qe.precision {
        PrecisionRegime::F64 => {
            for chunk in qe.payload.chunks_exact(8) {
                out.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
        PrecisionRegime::F32 => {
            for chunk in qe.payload.chunks_exact(4) {
                out.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        PrecisionRegime::F16 => {
            for chunk in qe.payload.chunks_exact(2) {
                out.push(f16::from_le_bytes(chunk.try_into().unwrap()).to_f64());
            }
        }
        PrecisionRegime::I8 => {
            let scale = qe.scale as f64;
            let zp = qe.zero_point as f64;
            for &b in &qe.payload {
                out.push((b as i8) as f64 * scale + zp);
            }
        }
    }
    Ok(out)
}

/// The density law: `NodeSize = d*p + L + H`.
pub fn node_size_model(d: u64, p: u64, linkage: f64, metadata: f64) -> f64 {
    (d * p) as f64 + linkage + metadata
}

/// Nodes that fit in a memory envelope: `floor(envelope / node_size)`.
pub fn capacity_projection(envelope_bytes: u64, node_size_bytes: f64) -> Result<u64> {
    if !(node_size_bytes > 0.0) {
        return Err(Error::ZeroNodeSize);
    }
    if node_size_bytes.fract() == 0.0 && node_size_bytes <= u64::MAX as f64 {
        let ns = node_size_bytes as u64;
        if ns == 0 {
            return Err(Error::ZeroNodeSize);
        }
        Ok(envelope_bytes / ns)
    } else {
        Ok((envelope_bytes as f64 / node_size_bytes).floor() as u64)
    }
}

/// One row of the precision envelope table.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeRow {
    pub regime: PrecisionRegime,
    pub bytes_per_component: u64,
    pub embedding_mass_bytes: u64,
    pub node_size_bytes: f64,
    pub nodes_per_tib: u64,
}

/// Estimated node size and nodes-per-TiB across all four regimes, given
/// linkage and metadata masses. I8 node size includes the 8-byte affine
/// side channel.
pub fn quantization_envelope_report(d: u64, linkage: f64, metadata: f64) -> Vec<EnvelopeRow> {
    PrecisionRegime::ALL
        .iter()
        .map(|&regime| {
            let p = regime.bytes_per_component() as u64;
            let side = if regime == PrecisionRegime::I8 {
                I8_SIDE_BYTES as f64
            } else {
                0.0
            };
            let node_size = node_size_model(d, p, linkage, metadata + side);
            EnvelopeRow {
                regime,
                bytes_per_component: p,
                embedding_mass_bytes: d * p,
                node_size_bytes: node_size,
                nodes_per_tib: capacity_projection(TIB_BYTES, node_size).unwrap_or(0),
            }
        })
        .collect()
}
