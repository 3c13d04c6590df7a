use std::fs;
use std::path::Path;

use corpus_eta::complexity::{analyze_yuv, yuv420_frame_len, ComplexityError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn write_clip(path: &Path, w: usize, h: usize, frames: &[Vec<u8>]) {
    let chroma = yuv420_frame_len(w, h) - w * h;
    let mut bytes = Vec::new();
    for luma in frames {
        assert_eq!(luma.len(), w * h);
        bytes.extend_from_slice(luma);
        bytes.extend(std::iter::repeat_n(128u8, chroma));
    }
    fs::write(path, bytes).unwrap();
}

#[test]
fn constant_gray_clip_has_no_energy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gray.yuv");
    // 70x50 leaves partial edge blocks on both axes.
    let (w, h) = (70, 50);
    write_clip(&path, w, h, &vec![vec![128; w * h]; 4]);
    let c = analyze_yuv::<f64>(&path, w, h, 4).unwrap();
    assert_eq!(c.spatial_energy, 0.0);
    assert_eq!(c.temporal_energy, 0.0);
    assert_eq!(c.luma, 128.0);
    let c32 = analyze_yuv::<f32>(&path, w, h, 4).unwrap();
    assert_eq!((c32.spatial_energy, c32.temporal_energy, c32.luma), (0.0, 0.0, 128.0));
}

#[test]
fn two_flat_levels_average_their_luma() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.yuv");
    write_clip(&path, 64, 64, &[vec![40; 64 * 64], vec![200; 64 * 64]]);
    let c = analyze_yuv::<f64>(&path, 64, 64, 2).unwrap();
    assert_eq!((c.spatial_energy, c.temporal_energy, c.luma), (0.0, 0.0, 120.0));
}

#[test]
fn noise_has_spatial_and_temporal_energy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noise.yuv");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let frames: Vec<Vec<u8>> = (0..3).map(|_| (0..64 * 48).map(|_| rng.random()).collect()).collect();
    write_clip(&path, 64, 48, &frames);
    let c = analyze_yuv::<f64>(&path, 64, 48, 3).unwrap();
    assert!(c.spatial_energy > 0.0 && c.temporal_energy > 0.0);
    assert_eq!(c.frames.len(), 3);
    assert_eq!(c.frames[0].temporal_energy, 0.0);
}

#[test]
fn duplicated_frames_have_zero_temporal_energy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dup.yuv");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let frame: Vec<u8> = (0..32 * 32).map(|_| rng.random()).collect();
    write_clip(&path, 32, 32, &[frame.clone(), frame.clone(), frame]);
    let c = analyze_yuv::<f64>(&path, 32, 32, 3).unwrap();
    assert!(c.spatial_energy > 0.0);
    assert_eq!(c.temporal_energy, 0.0);
}

#[test]
fn size_and_frame_count_are_checked() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.yuv");
    write_clip(&path, 32, 32, &[vec![0; 32 * 32]]);
    assert!(matches!(analyze_yuv::<f64>(&path, 32, 32, 2), Err(ComplexityError::Format(_))));
    assert!(matches!(analyze_yuv::<f64>(&path, 32, 32, 0), Err(ComplexityError::Domain(_))));
}
