use std::io::{Read, Write};
use std::path::Path;

use super::{positional_encoding, Field, FieldSample, SCENE_BOUND};
use crate::autodiff::Real;
use crate::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 6] = b"TGRAF1";

/// One fully-connected layer; weights row-major `[out][in]`.
#[derive(Clone, Debug)]
pub(crate) struct Dense {
    pub(crate) w: Vec<f64>,
    pub(crate) b: Vec<f64>,
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
}

impl Dense {
    fn init(in_dim: usize, out_dim: usize, rng: &mut impl rand::Rng) -> Dense {
        // uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
        Dense {
            w: (0..in_dim * out_dim).map(|_| rng.gen_range(-a..a)).collect(),
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    fn forward<T: Real>(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = T::constant(self.b[o]);
            for (wi, xi) in row.iter().zip(x.iter()) {
                acc = acc + *xi * T::constant(*wi);
            }
            out.push(acc);
        }
    }
}

/// Coordinate MLP scene: positional encoding, ReLU hidden layers with one
/// skip connection re-injecting the encoding, softplus density head and
/// sigmoid RGB head.
#[derive(Clone, Debug)]
pub struct MlpField {
    pub l_pos: usize,
    pub widths: Vec<usize>,
    pub(crate) hidden: Vec<Dense>,
    pub(crate) sigma_head: Dense,
    pub(crate) rgb_head: Dense,
}

impl MlpField {
    /// Encoded input width for a given frequency count.
    pub fn enc_dim(l_pos: usize) -> usize {
        3 + 6 * l_pos
    }

    /// Hidden layer that receives `[features, encoding]`; fixed to the
    /// middle layer of nets with at least 3 hidden layers.
    pub fn skip_index(n_hidden: usize) -> Option<usize> {
        if n_hidden >= 3 {
            Some(n_hidden / 2)
        } else {
            None
        }
    }

    /// Fresh net with seeded uniform initialization.
    pub fn init(l_pos: usize, widths: &[usize], seed: u64) -> Result<MlpField> {
        use rand::SeedableRng;
        if widths.is_empty() {
            return Err(Error::Config("MLP needs at least one hidden layer".into()));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let enc = Self::enc_dim(l_pos);
        let skip = Self::skip_index(widths.len());
        let mut hidden = Vec::with_capacity(widths.len());
        let mut in_dim = enc;
        for (i, &w) in widths.iter().enumerate() {
            if skip == Some(i) {
                in_dim += enc;
            }
            hidden.push(Dense::init(in_dim, w, &mut rng));
            in_dim = w;
        }
        let sigma_head = Dense::init(in_dim, 1, &mut rng);
        let rgb_head = Dense::init(in_dim, 3, &mut rng);
        Ok(MlpField {
            l_pos,
            widths: widths.to_vec(),
            hidden,
            sigma_head,
            rgb_head,
        })
    }

    /// The desk-scale default: 4 hidden layers of width 64, L = 6.
    pub fn default_architecture(seed: u64) -> MlpField {
        MlpField::init(6, &[64, 64, 64, 64], seed).expect("valid default architecture")
    }

    pub fn n_params(&self) -> usize {
        self.hidden
            .iter()
            .chain([&self.sigma_head, &self.rgb_head])
            .map(|d| d.w.len() + d.b.len())
            .sum()
    }

    pub(crate) fn layers(&self) -> Vec<&Dense> {
        let mut v: Vec<&Dense> = self.hidden.iter().collect();
        v.push(&self.sigma_head);
        v.push(&self.rgb_head);
        v
    }

    pub(crate) fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut v: Vec<&mut Dense> = self.hidden.iter_mut().collect();
        v.push(&mut self.sigma_head);
        v.push(&mut self.rgb_head);
        v
    }

    /// Raw (pre-activation) density and color outputs for an encoded input.
    fn heads<T: Real>(&self, enc: &[T]) -> (T, [T; 3]) {
        let skip = Self::skip_index(self.hidden.len());
        let mut h: Vec<T> = enc.to_vec();
        let mut buf: Vec<T> = Vec::new();
        for (i, layer) in self.hidden.iter().enumerate() {
            if skip == Some(i) {
                h.extend_from_slice(enc);
            }
            layer.forward(&h, &mut buf);
            for v in buf.iter_mut() {
                *v = v.relu();
            }
            std::mem::swap(&mut h, &mut buf);
        }
        let mut sig = Vec::with_capacity(1);
        self.sigma_head.forward(&h, &mut sig);
        let mut rgb = Vec::with_capacity(3);
        self.rgb_head.forward(&h, &mut rgb);
        (sig[0], [rgb[0], rgb[1], rgb[2]])
    }

    /// Little-endian binary checkpoint: magic "TGRAF1"; u32 header fields
    /// (L_pos, hidden-layer count, then each hidden width); then for every
    /// layer in order (hidden layers, density head, RGB head) the row-major
    /// `[out][in]` f64 weight matrix followed by the f64 bias vector.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(self.l_pos as u32).to_le_bytes());
        buf.extend_from_slice(&(self.widths.len() as u32).to_le_bytes());
        for &w in &self.widths {
            buf.extend_from_slice(&(w as u32).to_le_bytes());
        }
        for layer in self.layers() {
            for v in layer.w.iter().chain(layer.b.iter()) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<MlpField> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut off = 0usize;
        let take = |off: &mut usize, n: usize| -> Result<&[u8]> {
            if *off + n > bytes.len() {
                return Err(Error::Data(format!(
                    "{}: truncated checkpoint",
                    path.display()
                )));
            }
            let s = &bytes[*off..*off + n];
            *off += n;
            Ok(s)
        };
        if take(&mut off, 6)? != CHECKPOINT_MAGIC {
            return Err(Error::Data(format!(
                "{}: not a field checkpoint (bad magic)",
                path.display()
            )));
        }
        let read_u32 = |off: &mut usize| -> Result<u32> {
            Ok(u32::from_le_bytes(take(off, 4)?.try_into().unwrap()))
        };
        let l_pos = read_u32(&mut off)? as usize;
        let n_hidden = read_u32(&mut off)? as usize;
        if n_hidden == 0 || n_hidden > 64 {
            return Err(Error::Data(format!(
                "{}: implausible layer count {n_hidden}",
                path.display()
            )));
        }
        let mut widths = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            widths.push(read_u32(&mut off)? as usize);
        }
        let mut field = MlpField::init(l_pos, &widths, 0)?;
        for layer in field.layers_mut() {
            for slot in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                *slot = f64::from_le_bytes(take(&mut off, 8)?.try_into().unwrap());
            }
        }
        if off != bytes.len() {
            return Err(Error::Data(format!(
                "{}: {} trailing bytes after checkpoint payload",
                path.display(),
                bytes.len() - off
            )));
        }
        Ok(field)
    }
}

impl Field for MlpField {
    fn sample<T: Real>(&self, p: [T; 3]) -> FieldSample<T> {
        let scale = T::constant(1.0 / SCENE_BOUND);
        let enc = positional_encoding(
            [p[0] * scale, p[1] * scale, p[2] * scale],
            self.l_pos,
        );
        let (sigma_raw, rgb_raw) = self.heads(&enc);
        FieldSample {
            sigma: sigma_raw.softplus(),
            color: [
                rgb_raw[0].sigmoid(),
                rgb_raw[1].sigmoid(),
                rgb_raw[2].sigmoid(),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_ranges_enforced_by_heads() {
        let f = MlpField::init(4, &[16, 16, 16], 3).unwrap();
        for i in 0..50 {
            let t = i as f64 * 0.37;
            let p = [t.sin(), (t * 1.7).cos(), (t * 0.9).sin()];
            let s: FieldSample<f64> = f.sample(p);
            assert!(s.sigma >= 0.0);
            for c in s.color {
                assert!((0.0..=1.0).contains(&c));
            }
        }
    }

    #[test]
    fn skip_layer_widens_input() {
        let f = MlpField::init(6, &[64, 64, 64, 64], 0).unwrap();
        assert_eq!(MlpField::skip_index(4), Some(2));
        assert_eq!(f.hidden[2].in_dim, 64 + MlpField::enc_dim(6));
        assert_eq!(f.hidden[0].in_dim, MlpField::enc_dim(6));
    }

    #[test]
    fn checkpoint_roundtrip_preserves_output_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.tgraf");
        let f = MlpField::init(5, &[32, 32, 32], 17).unwrap();
        f.save(&path).unwrap();
        let g = MlpField::load(&path).unwrap();
        assert_eq!(f.n_params(), g.n_params());
        for i in 0..20 {
            let t = i as f64 * 0.61;
            let p = [t.sin() * 2.0, t.cos(), (t * 2.3).sin()];
            let a: FieldSample<f64> = f.sample(p);
            let b: FieldSample<f64> = g.sample(p);
            assert_eq!(a.sigma.to_bits(), b.sigma.to_bits());
            for c in 0..3 {
                assert_eq!(a.color[c].to_bits(), b.color[c].to_bits());
            }
        }
    }

    #[test]
    fn load_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.tgraf");
        std::fs::write(&path, b"NOTFLD0000").unwrap();
        assert!(MlpField::load(&path).is_err());
    }

    #[test]
    fn load_rejects_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.tgraf");
        let f = MlpField::init(2, &[8], 1).unwrap();
        f.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(MlpField::load(&path).is_err());
    }
}
