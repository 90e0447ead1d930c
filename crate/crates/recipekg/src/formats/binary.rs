//! Binary checkpoints and image files.
//!
//! | magic  | body                                                                 |
//! |--------|----------------------------------------------------------------------|
//! | `NNW1` | u32 layers; per layer u32 in, u32 out, u32 activation, f64 W, f64 b  |
//! | `ALN1` | u32 d_nlp, u32 d_kg, then an `NNW1` block                            |
//! | `KGE1` | u32 kind, u32 d, f64 γ, u32 n_ent + f64 rows, u32 n_rel + f64 params |
//! | `KVA1` | u32 H, u32 W, f64 λ, `NNW1` encoder, `NNW1` decoder                  |
//! | `RIMG` | u32 count, u32 H, u32 W, f32 pixels                                  |
//!
//! The KGE kind is 1 RotatE, 2 TransE, 3 DistMult, plus `0x100` for the L1
//! norm. Every reader rejects trailing bytes.

use recipekg_core::align::AlignerModel;
use recipekg_core::kge::{entity_width, KgeModel, ModelKind, Norm};
use recipekg_core::kgvae::{ImageSet, KgVaeModel};
use recipekg_core::nn::{Activation, DenseLayer, Mlp, Tensor};

use crate::error::{format_err, Result};

const L1_FLAG: u32 = 0x100;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn magic(&mut self, m: &[u8; 4]) {
        self.0.extend_from_slice(m);
    }

    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], origin: &'a str) -> Self {
        Self { bytes, pos: 0, origin }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(format_err(
                self.origin,
                format!("truncated at byte {} (needed {n} more)", self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn magic(&mut self, m: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != m {
            return Err(format_err(
                self.origin,
                format!("bad magic {:?}, expected {}", String::from_utf8_lossy(got), String::from_utf8_lossy(m)),
            ));
        }
        Ok(())
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| format_err(self.origin, "length overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(format_err(
                self.origin,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn put_network(w: &mut Writer, net: &Mlp) {
    w.magic(b"NNW1");
    w.u32(net.layers.len());
    for layer in &net.layers {
        w.u32(layer.input_dim());
        w.u32(layer.output_dim());
        w.u32(layer.activation.code() as usize);
        w.f64s(layer.weights.data());
        w.f64s(layer.bias.data());
    }
}

fn get_network(r: &mut Reader<'_>) -> Result<Mlp> {
    r.magic(b"NNW1")?;
    let n = r.u32()?;
    let mut layers = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        let (input, output, code) = (r.u32()?, r.u32()?, r.u32()?);
        let activation = u8::try_from(code)
            .ok()
            .and_then(Activation::from_code)
            .ok_or_else(|| format_err(r.origin, format!("unknown activation code {code}")))?;
        let weights = Tensor::new(vec![output, input], r.f64s(output * input)?)?;
        let bias = Tensor::new(vec![output], r.f64s(output)?)?;
        layers.push(DenseLayer::from_parts(weights, bias, activation)?);
    }
    Ok(Mlp::new(layers)?)
}

pub fn encode_network(net: &Mlp) -> Vec<u8> {
    let mut w = Writer::default();
    put_network(&mut w, net);
    w.0
}

pub fn decode_network(bytes: &[u8], origin: &str) -> Result<Mlp> {
    let mut r = Reader::new(bytes, origin);
    let net = get_network(&mut r)?;
    r.finish()?;
    Ok(net)
}

pub fn encode_aligner(model: &AlignerModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.magic(b"ALN1");
    w.u32(model.d_nlp);
    w.u32(model.d_kg);
    put_network(&mut w, &model.network);
    w.0
}

pub fn decode_aligner(bytes: &[u8], origin: &str) -> Result<AlignerModel> {
    let mut r = Reader::new(bytes, origin);
    r.magic(b"ALN1")?;
    let (d_nlp, d_kg) = (r.u32()?, r.u32()?);
    let model = AlignerModel::from_network(get_network(&mut r)?)?;
    r.finish()?;
    if model.d_nlp != d_nlp || model.d_kg != d_kg {
        return Err(format_err(
            origin,
            format!(
                "header says {d_nlp}→{d_kg} but network is {}→{}",
                model.d_nlp, model.d_kg
            ),
        ));
    }
    Ok(model)
}

pub fn encode_kge(model: &KgeModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.magic(b"KGE1");
    let norm_flag = if model.norm == Norm::L1 { L1_FLAG } else { 0 };
    w.u32((model.kind.code() | norm_flag) as usize);
    w.u32(model.dim);
    w.f64(model.gamma);
    w.u32(model.num_entities());
    w.f64s(&model.entity_emb);
    w.u32(model.num_relations());
    w.f64s(&model.relation_param);
    w.0
}

pub fn decode_kge(bytes: &[u8], origin: &str) -> Result<KgeModel> {
    let mut r = Reader::new(bytes, origin);
    r.magic(b"KGE1")?;
    let code = r.u32()? as u32;
    let kind = ModelKind::from_code(code & !L1_FLAG)
        .ok_or_else(|| format_err(origin, format!("unknown model kind code {code}")))?;
    let norm = if code & L1_FLAG != 0 { Norm::L1 } else { Norm::L2 };
    let dim = r.u32()?;
    let gamma = r.f64()?;
    let n_ent = r.u32()?;
    let entity_emb = r.f64s(n_ent * entity_width(kind, dim))?;
    let n_rel = r.u32()?;
    let relation_param = r.f64s(n_rel * dim)?;
    r.finish()?;
    Ok(KgeModel::from_parts(kind, norm, dim, gamma, entity_emb, relation_param)?)
}

pub fn encode_kgvae(model: &KgVaeModel, height: usize, width: usize) -> Vec<u8> {
    let mut w = Writer::default();
    w.magic(b"KVA1");
    w.u32(height);
    w.u32(width);
    w.f64(model.lambda);
    put_network(&mut w, &model.encoder);
    put_network(&mut w, &model.decoder);
    w.0
}

/// Model plus the image height and width it was trained on.
pub fn decode_kgvae(bytes: &[u8], origin: &str) -> Result<(KgVaeModel, usize, usize)> {
    let mut r = Reader::new(bytes, origin);
    r.magic(b"KVA1")?;
    let (height, width) = (r.u32()?, r.u32()?);
    let lambda = r.f64()?;
    let encoder = get_network(&mut r)?;
    let decoder = get_network(&mut r)?;
    r.finish()?;
    let model = KgVaeModel::from_parts(encoder, decoder, lambda)?;
    if model.pixels() != height * width {
        return Err(format_err(
            origin,
            format!("{height}×{width} images but the encoder takes {}", model.pixels()),
        ));
    }
    Ok((model, height, width))
}

/// Pixels are stored as f32.
pub fn encode_images(images: &ImageSet) -> Vec<u8> {
    let mut w = Writer::default();
    w.magic(b"RIMG");
    w.u32(images.count());
    w.u32(images.height());
    w.u32(images.width());
    for &p in images.pixels() {
        w.0.extend_from_slice(&(p as f32).to_le_bytes());
    }
    w.0
}

/// Decode pixels and attach the recipes from the sidecar index.
pub fn decode_images(bytes: &[u8], origin: &str, recipes: Vec<String>) -> Result<ImageSet> {
    let mut r = Reader::new(bytes, origin);
    r.magic(b"RIMG")?;
    let (count, height, width) = (r.u32()?, r.u32()?, r.u32()?);
    if count != recipes.len() {
        return Err(format_err(
            origin,
            format!("{count} images but the index lists {}", recipes.len()),
        ));
    }
    let n = count * height * width;
    let raw = r.take(n * 4)?;
    r.finish()?;
    let pixels = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(ImageSet::new(height, width, pixels, recipes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use recipekg_core::rng;

    #[test]
    fn network_round_trip() {
        let mut r = rng::seeded(3);
        let net = Mlp::with_widths(&[4, 3, 2], Activation::Tanh, Activation::Sigmoid, &mut r).unwrap();
        let bytes = encode_network(&net);
        assert_eq!(&bytes[..4], b"NNW1");
        assert_eq!(decode_network(&bytes, "n").unwrap(), net);
    }

    #[test]
    fn truncated_and_trailing_rejected() {
        let mut r = rng::seeded(3);
        let net = Mlp::with_widths(&[2, 2], Activation::Tanh, Activation::Identity, &mut r).unwrap();
        let bytes = encode_network(&net);
        assert!(decode_network(&bytes[..bytes.len() - 1], "n").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_network(&extra, "n").is_err());
    }

    #[test]
    fn kge_norm_flag_round_trips() {
        let m = KgeModel::from_parts(ModelKind::TransE, Norm::L1, 2, 5.0, vec![0.1, 0.2, 0.3, 0.4], vec![0.5, 0.6]).unwrap();
        assert_eq!(decode_kge(&encode_kge(&m), "k").unwrap(), m);
    }
}
