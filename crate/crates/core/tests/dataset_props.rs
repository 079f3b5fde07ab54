mod common;

use common::tree_digest;
use polyfield::dataset::{
    decode_field, encode_field, generate, generate_record, quantize_field, read_field,
    sample_scene, DatasetManifest, PvfError, SampleSpec, Split,
};
use polyfield::geometry::Scene;
use polyfield::groundtruth::has_multiway_junction;
use polyfield::polyvector::PolyVectorField;
use polyfield::raster::{PixelMask, RasterImage};
use proptest::prelude::*;

fn small_spec() -> SampleSpec {
    SampleSpec { canvas: 32, ..SampleSpec::default() }
}

#[test]
fn generation_is_deterministic() {
    let spec = small_spec();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate(7, 12, 9, &spec, a.path(), Some(4)).unwrap();
    let mb = generate(7, 12, 9, &spec, b.path(), Some(1)).unwrap();
    assert_eq!(ma, mb);
    let (da, db) = (tree_digest(a.path()), tree_digest(b.path()));
    assert_eq!(da.len(), 3 * 12 + 1);
    assert_eq!(da, db);

    let c = tempfile::tempdir().unwrap();
    generate(8, 12, 9, &spec, c.path(), None).unwrap();
    assert_ne!(tree_digest(c.path())["fields/000000.pvf"], da["fields/000000.pvf"]);
}

#[test]
fn records_are_independent_of_generation_order() {
    let spec = small_spec();
    let all = tempfile::tempdir().unwrap();
    generate(3, 6, 4, &spec, all.path(), None).unwrap();
    let single = tempfile::tempdir().unwrap();
    for sub in ["scenes", "images", "fields"] {
        std::fs::create_dir_all(single.path().join(sub)).unwrap();
    }
    for index in (0..6).rev() {
        let split = if index < 4 { Split::Train } else { Split::Val };
        generate_record(3, index, split, &spec, single.path()).unwrap();
    }
    let mut expected = tree_digest(all.path());
    expected.remove(DatasetManifest::FILE_NAME);
    assert_eq!(tree_digest(single.path()), expected);
}

#[test]
fn manifest_and_records_are_consistent() {
    let spec = small_spec();
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate(11, 8, 5, &spec, dir.path(), None).unwrap();
    assert_eq!(DatasetManifest::load(dir.path()).unwrap(), manifest);
    assert_eq!((manifest.train_count, manifest.val_count), (5, 3));
    for (i, rec) in manifest.records.iter().enumerate() {
        assert_eq!(rec.index, i as u64);
        assert_eq!(rec.split, if i < 5 { Split::Train } else { Split::Val });
        let scene = Scene::from_json(&std::fs::read_to_string(dir.path().join(&rec.scene_file)).unwrap()).unwrap();
        assert_eq!(scene, sample_scene(11, i as u64, &spec).unwrap());
        let field = read_field(&dir.path().join(&rec.field_file)).unwrap();
        assert!(field.defined_count() > 0);
        let image = RasterImage::read_png(&dir.path().join(&rec.image_file)).unwrap();
        assert_eq!((image.width(), image.height()), field.dims());
    }
}

#[test]
fn sampled_scenes_avoid_multiway_junctions() {
    let spec = SampleSpec::default();
    for index in 0..100 {
        let scene = sample_scene(1, index, &spec).unwrap();
        assert!((2..=4).contains(&scene.primitives.len()));
        let tol = spec.field.intersection_tol;
        assert!(!has_multiway_junction(&scene.junctions(tol), tol));
    }
}

#[test]
fn truncation_is_reported_at_the_end() {
    let mut field = PolyVectorField::empty(3, 3);
    field.set(1, 1, polyfield::polyvector::encode_angles(0.2, 1.0));
    let bytes = encode_field(&field);
    for cut in [0, 3, 15, 20, bytes.len() - 1] {
        match decode_field(&bytes[..cut]) {
            Err(PvfError::Format { offset, .. }) => assert_eq!(offset, cut),
            other => panic!("cut {cut}: {other:?}"),
        }
    }
}

fn any_field() -> impl Strategy<Value = PolyVectorField> {
    (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
        let n = (w * h) as usize;
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(prop::array::uniform4(-3.0f64..3.0), n),
        )
            .prop_map(move |(m, d)| {
                PolyVectorField::from_parts(PixelMask::from_data(w, h, m).unwrap(), d).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn pvf_round_trip_is_exact_at_32_bits(field in any_field()) {
        let bytes = encode_field(&field);
        let n = (field.width() * field.height()) as usize;
        prop_assert_eq!(bytes.len(), 16 + n + 16 * n);
        let back = decode_field(&bytes).unwrap();
        prop_assert_eq!(&back, &quantize_field(&field));
        prop_assert_eq!(encode_field(&back), bytes);
    }

    #[test]
    fn corrupt_mask_bytes_are_rejected(field in any_field(), pick in any::<prop::sample::Index>(), byte in 2u8..) {
        let mut bytes = encode_field(&field);
        let n = (field.width() * field.height()) as usize;
        let at = 16 + pick.index(n);
        bytes[at] = byte;
        match decode_field(&bytes) {
            Err(PvfError::Format { offset, .. }) => prop_assert_eq!(offset, at),
            other => prop_assert!(false, "{:?}", other),
        }
    }
}
