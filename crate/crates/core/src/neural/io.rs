//! Self-describing binary model file: magic, format version, config, feature
//! scheme, vocabulary, then each tensor with its name and shape, row-major
//! little-endian f64. Round-trips are bit-exact.

use std::io::{Read, Write};

use super::params::{ModelParameters, TENSOR_NAMES};
use super::{init_model, Activation, ModelConfig, ModelError};
use crate::tokenizer::{FeatureScheme, SchemeKind, Vocabulary};

const MAGIC: &[u8; 8] = b"FLOWLMDL";
const VERSION: u32 = 1;

fn fmt_err(field: &str, reason: impl Into<String>) -> ModelError {
    ModelError::Format {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn write_u32<W: Write>(w: &mut W, x: u32) -> Result<(), ModelError> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, x: u64) -> Result<(), ModelError> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, x: f64) -> Result<(), ModelError> {
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<(), ModelError> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], field: &str) -> Result<(), ModelError> {
    r.read_exact(buf)
        .map_err(|_| fmt_err(field, "file truncated"))
}

fn read_u32<R: Read>(r: &mut R, field: &str) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, field)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R, field: &str) -> Result<u64, ModelError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, field)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R, field: &str) -> Result<f64, ModelError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, field)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_str<R: Read>(r: &mut R, field: &str) -> Result<String, ModelError> {
    let len = read_u32(r, field)? as usize;
    if len > 1 << 20 {
        return Err(fmt_err(field, "implausible string length"));
    }
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf, field)?;
    String::from_utf8(buf).map_err(|_| fmt_err(field, "invalid utf-8"))
}

/// Serialize the model (config, scheme, vocabulary, all tensors).
pub fn save_model<W: Write>(params: &ModelParameters, mut sink: W) -> Result<(), ModelError> {
    let cfg = &params.config;
    sink.write_all(MAGIC)?;
    write_u32(&mut sink, VERSION)?;

    write_u64(&mut sink, cfg.window as u64)?;
    write_u64(&mut sink, cfg.embed_dim as u64)?;
    write_u64(&mut sink, cfg.lstm_units as u64)?;
    write_u64(&mut sink, cfg.dense_units as u64)?;
    write_f64(&mut sink, cfg.dropout_rate)?;
    write_str(&mut sink, cfg.layer1_activation.as_str())?;
    write_str(&mut sink, cfg.layer2_activation.as_str())?;
    write_u64(&mut sink, cfg.vocab_size as u64)?;
    write_u64(&mut sink, cfg.seed)?;
    write_f64(&mut sink, cfg.learning_rate)?;
    write_u64(&mut sink, cfg.batch_size as u64)?;
    write_u64(&mut sink, cfg.epochs as u64)?;
    write_f64(&mut sink, cfg.grad_clip_norm)?;

    write_str(&mut sink, params.scheme.kind.as_str())?;
    write_u32(&mut sink, params.scheme.high_port_threshold as u32)?;

    let data_tokens = params.vocab.data_tokens();
    write_u64(&mut sink, data_tokens.len() as u64)?;
    for token in data_tokens {
        write_str(&mut sink, token)?;
    }

    let shapes = ModelParameters::tensor_shapes(cfg);
    let tensors = params.flat_tensors();
    write_u64(&mut sink, tensors.len() as u64)?;
    for ((name, (rows, cols)), data) in TENSOR_NAMES.iter().zip(shapes).zip(tensors) {
        write_str(&mut sink, name)?;
        write_u64(&mut sink, 2)?;
        write_u64(&mut sink, rows as u64)?;
        write_u64(&mut sink, cols as u64)?;
        for &x in data {
            write_f64(&mut sink, x)?;
        }
    }
    Ok(())
}

/// Load a model produced by [`save_model`]. Version or shape inconsistencies
/// fail with an error naming the offending field; truncated files never
/// yield a partial model.
pub fn load_model<R: Read>(mut source: R) -> Result<ModelParameters, ModelError> {
    let mut magic = [0u8; 8];
    read_exact(&mut source, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(fmt_err("magic", "not a model file"));
    }
    let version = read_u32(&mut source, "version")?;
    if version != VERSION {
        return Err(fmt_err(
            "version",
            format!("unsupported version {version}, expected {VERSION}"),
        ));
    }

    let window = read_u64(&mut source, "window")? as usize;
    let embed_dim = read_u64(&mut source, "embed_dim")? as usize;
    let lstm_units = read_u64(&mut source, "lstm_units")? as usize;
    let dense_units = read_u64(&mut source, "dense_units")? as usize;
    let dropout_rate = read_f64(&mut source, "dropout_rate")?;
    let layer1 = read_str(&mut source, "layer1_activation")?;
    let layer2 = read_str(&mut source, "layer2_activation")?;
    let vocab_size = read_u64(&mut source, "vocab_size")? as usize;
    let seed = read_u64(&mut source, "seed")?;
    let learning_rate = read_f64(&mut source, "learning_rate")?;
    let batch_size = read_u64(&mut source, "batch_size")? as usize;
    let epochs = read_u64(&mut source, "epochs")? as usize;
    let grad_clip_norm = read_f64(&mut source, "grad_clip_norm")?;

    let config = ModelConfig {
        window,
        embed_dim,
        lstm_units,
        dense_units,
        dropout_rate,
        layer1_activation: Activation::parse(&layer1)
            .ok_or_else(|| fmt_err("layer1_activation", format!("unknown value {layer1:?}")))?,
        layer2_activation: Activation::parse(&layer2)
            .ok_or_else(|| fmt_err("layer2_activation", format!("unknown value {layer2:?}")))?,
        vocab_size,
        seed,
        learning_rate,
        batch_size,
        epochs,
        grad_clip_norm,
    };
    config.validate()?;

    let scheme_kind = read_str(&mut source, "scheme")?;
    let kind = SchemeKind::parse(&scheme_kind)
        .ok_or_else(|| fmt_err("scheme", format!("unknown value {scheme_kind:?}")))?;
    let threshold = read_u32(&mut source, "high_port_threshold")?;
    let scheme = FeatureScheme {
        kind,
        high_port_threshold: u16::try_from(threshold)
            .map_err(|_| fmt_err("high_port_threshold", "exceeds 65535"))?,
    };

    let token_count = read_u64(&mut source, "vocab")? as usize;
    if token_count + 2 != vocab_size {
        return Err(fmt_err(
            "vocab",
            format!("{token_count} data tokens inconsistent with V={vocab_size}"),
        ));
    }
    let mut tokens = Vec::with_capacity(token_count);
    for _ in 0..token_count {
        tokens.push(read_str(&mut source, "vocab")?);
    }
    let vocab = Vocabulary::from_data_tokens(tokens);
    if vocab.size() != vocab_size {
        return Err(fmt_err("vocab", "duplicate data tokens"));
    }

    // Build a zero model of the declared geometry, then fill the tensors.
    let mut params = init_model(config, vocab, scheme)?;
    let shapes = ModelParameters::tensor_shapes(&params.config);
    let tensor_count = read_u64(&mut source, "tensor_count")? as usize;
    if tensor_count != TENSOR_NAMES.len() {
        return Err(fmt_err(
            "tensor_count",
            format!("expected {}, found {tensor_count}", TENSOR_NAMES.len()),
        ));
    }
    for ((expected_name, (rows, cols)), dest) in TENSOR_NAMES
        .iter()
        .zip(shapes)
        .zip(params.flat_tensors_mut())
    {
        let name = read_str(&mut source, "tensor name")?;
        if name != *expected_name {
            return Err(fmt_err(
                expected_name,
                format!("expected tensor {expected_name:?}, found {name:?}"),
            ));
        }
        let ndim = read_u64(&mut source, &name)?;
        if ndim != 2 {
            return Err(fmt_err(&name, format!("expected 2 dims, found {ndim}")));
        }
        let r = read_u64(&mut source, &name)? as usize;
        let c = read_u64(&mut source, &name)? as usize;
        if (r, c) != (rows, cols) {
            return Err(fmt_err(
                &name,
                format!("shape [{r}, {c}] inconsistent with config [{rows}, {cols}]"),
            ));
        }
        for x in dest.iter_mut() {
            *x = read_f64(&mut source, &name)?;
        }
    }

    let mut trailing = [0u8; 1];
    if source.read(&mut trailing)? != 0 {
        return Err(fmt_err("eof", "trailing bytes after last tensor"));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{forward, Mode};
    use crate::tokenizer::FeatureScheme;

    fn model() -> ModelParameters {
        let vocab = Vocabulary::build(["x", "y", "z"]);
        let cfg = ModelConfig {
            window: 5,
            embed_dim: 4,
            lstm_units: 3,
            dense_units: 4,
            vocab_size: vocab.size(),
            seed: 99,
            ..ModelConfig::default()
        };
        init_model(cfg, vocab, FeatureScheme::service_port()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let mut buf = Vec::new();
        save_model(&m, &mut buf).unwrap();
        let loaded = load_model(buf.as_slice()).unwrap();

        assert_eq!(loaded.config, m.config);
        assert_eq!(loaded.vocab, m.vocab);
        assert_eq!(loaded.scheme, m.scheme);
        for (a, b) in m.flat_tensors().into_iter().zip(loaded.flat_tensors()) {
            assert_eq!(a, b);
        }

        let ctxs: Vec<&[u32]> = vec![&[0, 2, 3, 4, 2]];
        let (pa, _) = forward(&m, &ctxs, Mode::Eval, None).unwrap();
        let (pb, _) = forward(&loaded, &ctxs, Mode::Eval, None).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn truncated_file_fails_cleanly() {
        let m = model();
        let mut buf = Vec::new();
        save_model(&m, &mut buf).unwrap();
        for len in [4, 40, buf.len() / 2, buf.len() - 3] {
            let err = load_model(&buf[..len]).unwrap_err();
            assert!(matches!(err, ModelError::Format { .. }), "len {len}: {err}");
        }
    }

    #[test]
    fn corrupt_embedding_shape_names_the_tensor() {
        let m = model();
        let mut buf = Vec::new();
        save_model(&m, &mut buf).unwrap();
        // The embedding row count sits right after its name and ndim fields;
        // find the name and bump the row count so it disagrees with V.
        let needle = b"embedding";
        let at = buf
            .windows(needle.len())
            .position(|w| w == needle)
            .unwrap();
        let rows_at = at + needle.len() + 8;
        buf[rows_at] = buf[rows_at].wrapping_add(1);
        let err = load_model(buf.as_slice()).unwrap_err();
        assert!(
            matches!(err, ModelError::Format { ref field, .. } if field == "embedding"),
            "{err}"
        );
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = load_model(&b"NOTAMODELFILE___"[..]).unwrap_err();
        assert!(matches!(err, ModelError::Format { ref field, .. } if field == "magic"));
    }
}
