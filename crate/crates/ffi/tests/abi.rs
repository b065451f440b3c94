use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::ptr;

use colorgan::colorspace::{rgb_pixel_to_lab, RgbImage};
use colorgan::dataio::{build_manifest, save_png, Dataset, FilterPolicy, LabelMode};
use colorgan::networks::{ExtractorConfig, NetworkConfig};
use colorgan::trainer::{train, TrainConfig};
use colorgan_ffi::*;

fn last_error() -> Option<String> {
    let p = colorgan_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn pattern(h: usize, w: usize, shift: usize) -> RgbImage {
    RgbImage::from_fn(h, w, |y, x| {
        let t = ((x + shift) * 9 + y * 5) as u8;
        [t, t.wrapping_mul(3), 255 - t]
    })
    .unwrap()
}

/// Trains a two-step toy model and returns its checkpoint.
fn toy_checkpoint(dir: &Path) -> CString {
    for k in 0..2 {
        let class_dir = dir.join(format!("data/c{k}"));
        fs::create_dir_all(&class_dir).unwrap();
        for i in 0..4 {
            save_png(&pattern(16, 16, i * 3 + k * 7), &class_dir.join(format!("{i}.png"))).unwrap();
        }
    }
    let manifest = build_manifest(&dir.join("data"), LabelMode::SingleClass).unwrap();
    let dataset = Dataset::prepare(&manifest, &FilterPolicy::default(), 16).unwrap();
    let config = TrainConfig {
        batch_size: 4,
        epochs: 1,
        network: NetworkConfig {
            image_size: 16,
            levels: 2,
            base_channels: 4,
            max_channels: 8,
            head_hidden: 8,
            disc_channels: [4, 4, 8, 8],
            disc_hidden: 8,
            extractor: ExtractorConfig {
                width: 4,
                ..Default::default()
            },
            ..Default::default()
        },
        ..Default::default()
    };
    let state = train(&dataset, &config, &dir.join("run")).unwrap();
    let path = dir.join(format!("run/ckpt_{}.bin", state.global_step));
    CString::new(path.to_str().unwrap()).unwrap()
}

#[test]
fn model_lifecycle_and_colorize() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = toy_checkpoint(dir.path());
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { colorgan_model_load(ckpt.as_ptr(), &mut model) },
        ColorganStatus::Ok
    );
    assert!(!model.is_null());
    assert!(last_error().is_none());
    assert_eq!(unsafe { colorgan_model_image_size(model) }, 16);

    let (h, w) = (12, 21);
    let rgb = pattern(h, w, 1).to_raw();
    let gray: Vec<u8> = rgb.chunks_exact(3).map(|p| p[1]).collect();
    let gray3: Vec<u8> = gray.iter().flat_map(|&v| [v, v, v]).collect();
    let mut a = vec![0u8; h * w * 3];
    let mut b = vec![0u8; h * w * 3];
    let mut c = vec![0u8; h * w * 3];
    unsafe {
        assert_eq!(
            colorgan_colorize(model, gray.as_ptr(), h, w, 1, a.as_mut_ptr()),
            ColorganStatus::Ok
        );
        assert_eq!(
            colorgan_colorize(model, gray3.as_ptr(), h, w, 3, b.as_mut_ptr()),
            ColorganStatus::Ok
        );
        assert_eq!(
            colorgan_colorize(model, gray.as_ptr(), h, w, 1, c.as_mut_ptr()),
            ColorganStatus::Ok
        );
    }
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert!(a.iter().any(|&v| v != 0));

    unsafe {
        assert_eq!(
            colorgan_colorize(model, gray.as_ptr(), h, w, 2, a.as_mut_ptr()),
            ColorganStatus::InvalidArgument
        );
        assert!(last_error().unwrap().contains("channels"));
        assert_eq!(
            colorgan_colorize(model, ptr::null(), h, w, 1, a.as_mut_ptr()),
            ColorganStatus::NullPointer
        );
        assert_eq!(
            colorgan_colorize(model, gray.as_ptr(), 0, w, 1, a.as_mut_ptr()),
            ColorganStatus::InvalidArgument
        );
        assert_eq!(
            colorgan_colorize(ptr::null_mut(), gray.as_ptr(), h, w, 1, a.as_mut_ptr()),
            ColorganStatus::NullPointer
        );
        colorgan_model_free(model);
        colorgan_model_free(ptr::null_mut());
        assert_eq!(colorgan_model_image_size(ptr::null()), 0);
    }
}

#[test]
fn load_failures_map_to_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = ptr::null_mut();
    let missing = CString::new(dir.path().join("nope.bin").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { colorgan_model_load(missing.as_ptr(), &mut model) },
        ColorganStatus::NotFound
    );
    assert!(model.is_null());
    assert!(last_error().unwrap().contains("nope.bin"));

    let corrupt = dir.path().join("corrupt.bin");
    fs::write(&corrupt, b"CLGNARCH\x01\x00").unwrap();
    let corrupt = CString::new(corrupt.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { colorgan_model_load(corrupt.as_ptr(), &mut model) },
        ColorganStatus::Checkpoint
    );
    assert!(model.is_null());

    assert_eq!(
        unsafe { colorgan_model_load(ptr::null(), &mut model) },
        ColorganStatus::NullPointer
    );
    assert_eq!(
        unsafe { colorgan_model_load(missing.as_ptr(), ptr::null_mut()) },
        ColorganStatus::NullPointer
    );
}

#[test]
fn metrics_and_lab_conversion() {
    let (h, w) = (16, 20);
    let a = pattern(h, w, 0).to_raw();
    let b = pattern(h, w, 2).to_raw();
    let mut m = ColorganMetrics::default();
    assert_eq!(
        unsafe { colorgan_metrics(a.as_ptr(), a.as_ptr(), h, w, &mut m) },
        ColorganStatus::Ok
    );
    assert_eq!((m.psnr, m.ssim, m.mse, m.uqi, m.vif), (99.0, 1.0, 0.0, 1.0, 1.0));
    assert_eq!(
        unsafe { colorgan_metrics(a.as_ptr(), b.as_ptr(), h, w, &mut m) },
        ColorganStatus::Ok
    );
    let direct = colorgan::metrics::MetricReport::compute(&pattern(h, w, 0), &pattern(h, w, 2)).unwrap();
    assert_eq!([m.psnr, m.ssim, m.mse, m.uqi, m.vif], direct.values());
    // too small for the windowed metrics
    assert_eq!(
        unsafe { colorgan_metrics(a.as_ptr(), a.as_ptr(), 2, 3, &mut m) },
        ColorganStatus::Shape
    );

    let mut lab = vec![0.0; h * w * 3];
    assert_eq!(
        unsafe { colorgan_rgb_to_lab(a.as_ptr(), h, w, lab.as_mut_ptr()) },
        ColorganStatus::Ok
    );
    for (px, out) in a.chunks_exact(3).zip(lab.chunks_exact(3)) {
        assert_eq!(rgb_pixel_to_lab([px[0], px[1], px[2]]).as_slice(), out);
    }
    assert_eq!(
        unsafe { colorgan_rgb_to_lab(a.as_ptr(), h, w, ptr::null_mut()) },
        ColorganStatus::NullPointer
    );
}

#[test]
fn header_declares_every_export() {
    let header = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/colorgan.h")).unwrap();
    for name in [
        "colorgan_last_error",
        "colorgan_version",
        "colorgan_model_load",
        "colorgan_model_free",
        "colorgan_model_image_size",
        "colorgan_colorize",
        "colorgan_metrics",
        "colorgan_rgb_to_lab",
        "typedef struct ColorganModel ColorganModel;",
        "COLORGAN_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
    let version = unsafe { CStr::from_ptr(colorgan_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}
