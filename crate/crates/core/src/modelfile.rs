//! Binary model container shared by every method.
//!
//! Layout, all integers `u32` and all reals `f64`, little-endian:
//!
//! ```text
//! "KPMD" | version | tag: u8 | n | m | d
//! tag 0..=2 (dkuc, dkac, dkn), d = embedding width:
//!     activation: u8 | embed widths | control widths
//!     state normalizer | control normalizer
//!     embed (W, b per layer) | control (W, b per layer) | A | B
//! tag 3 (krbf), d = number of centers:
//!     sigma | centers row-major | A | B
//! tag 4 (kdnn), d = 0:
//!     activation: u8 | net widths | state normalizer | control normalizer
//!     net (W, b per layer)
//! ```
//!
//! Width lists are a count followed by the widths (count 0 for an absent
//! network). A normalizer is a presence byte followed by offsets and scales.

use std::path::Path;

use crate::baselines::{KdnnModel, KrbfModel, RbfLift};
use crate::binio::{read_file, Reader, Writer};
use crate::datagen::Normalizer;
use crate::diffcore::{Activation, Linear, Mlp};
use crate::error::{Error, Result};
use crate::koopman::{KoopmanModel, Variant};

pub const MODEL_MAGIC: &[u8; 4] = b"KPMD";
pub const MODEL_VERSION: u32 = 1;

/// Any persisted model.
#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Koopman(KoopmanModel),
    Krbf(KrbfModel),
    Kdnn(KdnnModel),
}

fn variant_tag(v: Variant) -> u8 {
    match v {
        Variant::Dkuc => 0,
        Variant::Dkac => 1,
        Variant::Dkn => 2,
    }
}

fn write_widths(w: &mut Writer, net: Option<&Mlp>) {
    match net {
        Some(net) => {
            w.u32(net.widths().len() as u32);
            for &x in net.widths() {
                w.u32(x as u32);
            }
        }
        None => w.u32(0),
    }
}

fn read_widths(r: &mut Reader) -> Result<Vec<usize>> {
    let count = r.u32()? as usize;
    if count == 1 || count > 64 {
        return Err(Error::Format(format!("implausible layer count {count}")));
    }
    (0..count).map(|_| Ok(r.u32()? as usize)).collect()
}

fn write_norm(w: &mut Writer, norm: Option<&Normalizer>) {
    match norm {
        Some(n) => {
            w.u8(1);
            w.f64s(&n.offset);
            w.f64s(&n.scale);
        }
        None => w.u8(0),
    }
}

fn read_norm(r: &mut Reader, dim: usize) -> Result<Option<Normalizer>> {
    match r.u8()? {
        0 => Ok(None),
        1 => Ok(Some(Normalizer {
            offset: r.f64s(dim)?,
            scale: r.f64s(dim)?,
        })),
        other => Err(Error::Format(format!("bad normalizer flag {other}"))),
    }
}

fn write_net(w: &mut Writer, net: Option<&Mlp>) {
    if let Some(net) = net {
        for p in net.params() {
            w.tensor(p);
        }
    }
}

fn read_net(r: &mut Reader, widths: &[usize], activation: Activation) -> Result<Option<Mlp>> {
    if widths.is_empty() {
        return Ok(None);
    }
    if widths.contains(&0) {
        return Err(Error::Format("zero layer width".into()));
    }
    let layers = widths
        .windows(2)
        .map(|pair| {
            Ok(Linear {
                weight: r.tensor(pair[0], pair[1])?,
                bias: r.tensor(1, pair[1])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(Mlp::from_layers(layers, activation)?))
}

fn read_activation(r: &mut Reader) -> Result<Activation> {
    let tag = r.u8()?;
    Activation::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown activation tag {tag}")))
}

impl SavedModel {
    pub fn method_name(&self) -> &'static str {
        match self {
            SavedModel::Koopman(m) => m.variant.name(),
            SavedModel::Krbf(_) => "krbf",
            SavedModel::Kdnn(_) => "kdnn",
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            SavedModel::Koopman(m) => m.state_dim,
            SavedModel::Krbf(m) => m.state_dim(),
            SavedModel::Kdnn(m) => m.state_dim,
        }
    }

    pub fn control_dim(&self) -> usize {
        match self {
            SavedModel::Koopman(m) => m.control_dim,
            SavedModel::Krbf(m) => m.control_dim,
            SavedModel::Kdnn(m) => m.control_dim,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MODEL_MAGIC);
        w.u32(MODEL_VERSION);
        match self {
            SavedModel::Koopman(m) => {
                w.u8(variant_tag(m.variant));
                w.u32(m.state_dim as u32);
                w.u32(m.control_dim as u32);
                w.u32(m.embed_dim as u32);
                let activation = m
                    .embed_net
                    .as_ref()
                    .or(m.control_net.as_ref())
                    .map_or(Activation::Tanh, Mlp::activation);
                w.u8(activation.tag());
                write_widths(&mut w, m.embed_net.as_ref());
                write_widths(&mut w, m.control_net.as_ref());
                write_norm(&mut w, m.state_norm.as_ref());
                write_norm(&mut w, m.control_norm.as_ref());
                write_net(&mut w, m.embed_net.as_ref());
                write_net(&mut w, m.control_net.as_ref());
                w.tensor(&m.a);
                w.tensor(&m.b);
            }
            SavedModel::Krbf(m) => {
                w.u8(3);
                w.u32(m.state_dim() as u32);
                w.u32(m.control_dim as u32);
                w.u32(m.lift.centers().len() as u32);
                w.f64(m.lift.sigma());
                for c in m.lift.centers() {
                    w.f64s(c);
                }
                w.tensor(&m.a);
                w.tensor(&m.b);
            }
            SavedModel::Kdnn(m) => {
                w.u8(4);
                w.u32(m.state_dim as u32);
                w.u32(m.control_dim as u32);
                w.u32(0);
                w.u8(m.net.activation().tag());
                write_widths(&mut w, Some(&m.net));
                write_norm(&mut w, m.state_norm.as_ref());
                write_norm(&mut w, m.control_norm.as_ref());
                write_net(&mut w, Some(&m.net));
            }
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("model version {version}, expected {MODEL_VERSION}")));
        }
        let tag = r.u8()?;
        let n = r.u32()? as usize;
        let m = r.u32()? as usize;
        let d = r.u32()? as usize;
        if n == 0 || m == 0 {
            return Err(Error::Format("zero dimension in model header".into()));
        }
        let model = match tag {
            0..=2 => {
                let variant = [Variant::Dkuc, Variant::Dkac, Variant::Dkn][tag as usize];
                let activation = read_activation(&mut r)?;
                let embed_widths = read_widths(&mut r)?;
                let control_widths = read_widths(&mut r)?;
                let state_norm = read_norm(&mut r, n)?;
                let control_norm = read_norm(&mut r, m)?;
                let embed_net = read_net(&mut r, &embed_widths, activation)?;
                let control_net = read_net(&mut r, &control_widths, activation)?;
                let expected_control = match variant {
                    Variant::Dkuc => None,
                    Variant::Dkac => Some((n, m)),
                    Variant::Dkn => Some((n + m, m)),
                };
                let embed_ok = match &embed_net {
                    Some(net) => d > 0 && net.input_dim() == n && net.output_dim() == d,
                    None => d == 0,
                };
                let control_ok = control_net.as_ref().map(|c| (c.input_dim(), c.output_dim())) == expected_control;
                if !embed_ok || !control_ok {
                    return Err(Error::Format("network shapes disagree with the header".into()));
                }
                let a = r.tensor(n + d, n + d)?;
                let b = r.tensor(n + d, m)?;
                SavedModel::Koopman(KoopmanModel {
                    variant,
                    state_dim: n,
                    control_dim: m,
                    embed_dim: d,
                    embed_net,
                    control_net,
                    a,
                    b,
                    state_norm,
                    control_norm,
                })
            }
            3 => {
                let sigma = r.f64()?;
                let centers = (0..d).map(|_| r.f64s(n)).collect::<Result<Vec<_>>>()?;
                let lift = RbfLift::new(n, centers, sigma).map_err(|e| Error::Format(e.to_string()))?;
                let a = r.tensor(n + d, n + d)?;
                let b = r.tensor(n + d, m)?;
                SavedModel::Krbf(KrbfModel {
                    lift,
                    control_dim: m,
                    a,
                    b,
                })
            }
            4 => {
                let activation = read_activation(&mut r)?;
                let widths = read_widths(&mut r)?;
                let state_norm = read_norm(&mut r, n)?;
                let control_norm = read_norm(&mut r, m)?;
                let net = read_net(&mut r, &widths, activation)?
                    .ok_or_else(|| Error::Format("kdnn model without a network".into()))?;
                let mut model = KdnnModel::from_net(net, n, m).map_err(|e| Error::Format(e.to_string()))?;
                model.state_norm = state_norm;
                model.control_norm = control_norm;
                SavedModel::Kdnn(model)
            }
            other => return Err(Error::Format(format!("unknown model tag {other}"))),
        };
        r.expect_end()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path, "model")?)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::diffcore::Tensor;
    use crate::koopman::Architecture;

    fn koopman(variant: Variant, d: usize) -> KoopmanModel {
        let arch = Architecture {
            variant,
            state_dim: 3,
            control_dim: 2,
            embed_dim: d,
            hidden: vec![5, 4],
            activation: Activation::Tanh,
        };
        KoopmanModel::new(&arch, &mut ChaCha8Rng::seed_from_u64(d as u64 + 1)).unwrap()
    }

    fn round_trip(model: SavedModel) {
        let bytes = model.to_bytes();
        let back = SavedModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn koopman_variants_round_trip() {
        for v in [Variant::Dkuc, Variant::Dkac, Variant::Dkn] {
            round_trip(SavedModel::Koopman(koopman(v, 4)));
            round_trip(SavedModel::Koopman(koopman(v, 0)));
        }
        let mut with_norm = koopman(Variant::Dkn, 2);
        with_norm.state_norm = Some(Normalizer {
            offset: vec![0.1, -0.2, 0.3],
            scale: vec![1.5, 2.5, 0.1],
        });
        with_norm.control_norm = Some(Normalizer::identity(2));
        round_trip(SavedModel::Koopman(with_norm));
    }

    #[test]
    fn baselines_round_trip() {
        let lift = RbfLift::new(2, vec![vec![0.5, -1.0], vec![f64::MIN_POSITIVE, 3.0]], 0.7).unwrap();
        let n = lift.lifted_dim();
        round_trip(SavedModel::Krbf(KrbfModel {
            lift,
            control_dim: 1,
            a: Tensor::eye(n).scale(std::f64::consts::PI),
            b: Tensor::full(n, 1, -1e-300),
        }));
        let mut kdnn = KdnnModel::new(2, 1, &[7], Activation::Relu, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        kdnn.state_norm = Some(Normalizer::identity(2));
        round_trip(SavedModel::Kdnn(kdnn));
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = SavedModel::Koopman(koopman(Variant::Dkac, 3)).to_bytes();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(SavedModel::from_bytes(&bad_magic), Err(Error::Format(_))));
        assert!(matches!(SavedModel::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(SavedModel::from_bytes(&extra), Err(Error::Format(_))));
        let mut bad_tag = bytes;
        bad_tag[8] = 9;
        assert!(matches!(SavedModel::from_bytes(&bad_tag), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_not_found() {
        let err = SavedModel::load(Path::new("/nonexistent/model.kpmd")).unwrap_err();
        assert!(matches!(err, Error::NotFound { kind: "model", .. }));
    }
}
