//! Attention-map extraction and PGM export.

use evit_core::analysis::{attention_maps, write_attention_maps};
use evit_core::attention::{AttentionProbe, Fovea};
use evit_core::backbone::{BuildOptions, Evit, VariantSpec};
use evit_core::image::Image;
use evit_core::nn::ForwardCtx;
use evit_core::{Error, Tensor};

fn image(side: usize) -> Tensor {
    Tensor::from_fn(&[3, side, side], |i| ((i * 13) % 97) as f64 / 96.0)
}

fn model() -> Evit {
    Evit::build(&VariantSpec::reduced_tiny(2), BuildOptions::seeded(3)).unwrap()
}

#[test]
fn stage_three_maps_are_fourteen_square_at_224() {
    let m = model();
    let maps = attention_maps(&m, &image(224), 3, 1, Fovea::Shallow).unwrap();
    assert_eq!(maps.len(), m.spec.stages[2].heads);
    for map in &maps {
        assert_eq!((map.height, map.width), (14, 14));
        assert!(map.normalized.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn attention_rows_are_distributions() {
    let m = model();
    let mut ctx = ForwardCtx::inference(m.params());
    ctx.probe = Some(AttentionProbe::everything());
    let x = ctx.tape.constant(image(64).reshape(&[1, 3, 64, 64]).unwrap());
    m.forward(&mut ctx, x).unwrap();
    let records = ctx.probe.unwrap().records;
    assert_eq!(records.len(), 8);
    for r in records {
        let nk = r.weights.shape()[3];
        for row in r.weights.data().chunks(nk) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn uniform_attention_maps_to_mid_gray() {
    let mut m = model();
    let dfa = &m.stages[1].blocks[0].attn.dfa;
    let ids = [dfa.q.weight, dfa.q.bias, dfa.k.weight, dfa.k.bias];
    for id in ids {
        let shape = m.params().get(id).shape().to_vec();
        m.params_mut().set(id, Tensor::zeros(&shape)).unwrap();
    }
    let maps = attention_maps(&m, &image(64), 2, 1, Fovea::Deep).unwrap();
    for map in maps {
        assert!(map.normalized.iter().all(|&v| v == 0.5));
        assert!(map.to_image().pixels.iter().all(|&p| p == 128));
    }
}

#[test]
fn exported_files_are_readable_pgm() {
    let dir = tempfile::tempdir().unwrap();
    let m = model();
    let maps = attention_maps(&m, &image(64), 4, 1, Fovea::Deep).unwrap();
    let paths = write_attention_maps(&maps, dir.path()).unwrap();
    assert_eq!(paths.len(), m.spec.stages[3].heads);
    for p in paths {
        let img = Image::read(&p).unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 2, 1));
    }
}

#[test]
fn out_of_range_locations_are_index_errors() {
    let m = model();
    for (s, b) in [(0, 1), (5, 1), (2, 0), (2, 2)] {
        assert!(matches!(attention_maps(&m, &image(64), s, b, Fovea::Shallow), Err(Error::Index(_))), "({s}, {b})");
    }
}
