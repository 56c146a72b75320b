use std::collections::{BTreeMap, BTreeSet};

use gramseg::cluster::ClusterSelection;
use gramseg::dataset;
use gramseg::imaging::{self, RasterImage};
use gramseg::label::LabelMap;
use gramseg::morphology::Cleanup;
use gramseg::pipeline::{self, ConfigFile, Method, SegmentationStats, SpeciesConfig};
use gramseg::synthetic::{self, SceneParams};
use gramseg::threshold::Polarity;
use gramseg::Error;

fn cfg(species_id: u8, method: Method, kernel: u32) -> SpeciesConfig {
    SpeciesConfig {
        species_id,
        method,
        cleanup: Cleanup::Close,
        kernel_diameter: kernel,
        seed: 3,
    }
}

#[test]
fn clostridium_style_three_clusters() {
    let scene = synthetic::generate(
        &SceneParams {
            artifacts: 8,
            ..SceneParams::default()
        },
        2024,
    );
    let mut c = cfg(6, Method::kmeans(3, ClusterSelection::Manual(BTreeSet::from([0]))), 13);
    let a = pipeline::annotate_detailed(&scene.image, &c).unwrap();
    // the artifact debris is left out entirely
    assert_eq!(a.mask.iou(&scene.artifacts).unwrap(), 0.0);
    assert!(a.mask.iou(&scene.truth).unwrap() >= 0.95);
    match a.stats {
        SegmentationStats::Kmeans { centroids, .. } => assert_eq!(centroids.len(), 3),
        _ => panic!("expected k-means stats"),
    }

    // with opening the isolated specks go too
    c.cleanup = Cleanup::Open;
    let opened = pipeline::annotate_image(&scene.image, &c).unwrap();
    assert_eq!(opened.iou(&scene.specks).unwrap(), 0.0);
    assert_eq!(opened.iou(&scene.artifacts).unwrap(), 0.0);
}

#[test]
fn three_clusters_can_settle_on_a_background_split() {
    // k-means++ is a single seeded run: on this scene the background noise
    // outweighs the artifact and the third seed lands in the background.
    let scene = synthetic::generate(
        &SceneParams {
            artifacts: 8,
            ..SceneParams::default()
        },
        77,
    );
    let c = cfg(6, Method::kmeans(3, ClusterSelection::Manual(BTreeSet::from([0]))), 13);
    let a = pipeline::annotate_detailed(&scene.image, &c).unwrap();
    let SegmentationStats::Kmeans { centroid_lumas, .. } = a.stats else {
        panic!("expected k-means stats");
    };
    assert!(centroid_lumas[1] > 200.0 && centroid_lumas[2] > 200.0);
    assert!(a.mask.iou(&scene.artifacts).unwrap() > 0.0);
}

#[test]
fn bifidobacterium_style_two_clusters() {
    let scene = synthetic::generate(&SceneParams::default(), 78);
    let c = cfg(4, Method::kmeans(2, ClusterSelection::Darkest), 9);
    let mask = pipeline::annotate_image(&scene.image, &c).unwrap();
    assert!(mask.iou(&scene.truth).unwrap() >= 0.95);
}

#[test]
fn veionella_style_otsu_with_uneven_stain() {
    // stain intensity drifts across the slide, which defeats a single color
    // cluster but not a luma threshold
    let base = synthetic::generate(&SceneParams::default(), 79);
    let img = RasterImage::from_fn(512, 512, |x, y| {
        let p = base.image.get(x, y);
        if base.truth.get(x, y) || base.specks.get(x, y) {
            let shift = (x / 8) as u8;
            [p[0].saturating_add(shift), p[1], p[2].saturating_sub(shift)]
        } else {
            p
        }
    })
    .unwrap();
    let c = SpeciesConfig {
        cleanup: Cleanup::Open,
        ..cfg(33, Method::otsu(Polarity::DarkForeground), 5)
    };
    let a = pipeline::annotate_detailed(&img, &c).unwrap();
    assert!(a.mask.iou(&base.truth).unwrap() >= 0.95);
    // opening with a 5-disk strips specks narrower than the kernel
    assert!(a.mask.count_ones() < a.segmented.count_ones());
    let gray = imaging::to_grayscale(&img);
    let expected = gramseg::threshold::otsu_threshold(&imaging::histogram(&gray)).unwrap();
    assert_eq!(a.stats, SegmentationStats::Otsu(expected));
}

#[test]
fn opening_removes_specks_smaller_than_kernel() {
    let scene = synthetic::generate(&SceneParams::default(), 80);
    let mut c = cfg(4, Method::kmeans(2, ClusterSelection::Darkest), 9);
    c.cleanup = Cleanup::Open;
    let mask = pipeline::annotate_image(&scene.image, &c).unwrap();
    assert_eq!(mask.iou(&scene.specks).unwrap(), 0.0);
    assert!(mask.iou(&scene.truth).unwrap() >= 0.9);
}

#[test]
fn annotate_is_deterministic() {
    let scene = synthetic::generate(&SceneParams::default(), 81);
    let c = cfg(4, Method::kmeans(3, ClusterSelection::Darkest), 7);
    assert_eq!(
        pipeline::annotate_image(&scene.image, &c).unwrap(),
        pipeline::annotate_image(&scene.image, &c).unwrap()
    );
}

fn mini_tree(species: &[&str], per: usize) -> tempfile::TempDir {
    let root = tempfile::tempdir().unwrap();
    let params = SceneParams {
        width: 96,
        height: 80,
        blobs: 2,
        specks: 3,
        major_axis: (10.0, 14.0),
        minor_axis: (5.0, 7.0),
        ..SceneParams::default()
    };
    synthetic::write_mini_dataset(root.path(), species, per, &params, 5).unwrap();
    root
}

#[test]
fn batch_fails_fast_on_missing_config() {
    let root = mini_tree(&["Proteus", "Veionella"], 2);
    let manifest = dataset::ingest_dibas(root.path()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let configs = BTreeMap::from([(27, cfg(27, Method::kmeans(2, ClusterSelection::Darkest), 3))]);
    let err = pipeline::batch_annotate(&manifest, &configs, out.path(), None).unwrap_err();
    assert!(matches!(err, Error::MissingConfig(ref s) if s == "Veionella"));
    assert_eq!(std::fs::read_dir(out.path()).unwrap().count(), 0);

    // restricting to the configured species is fine
    let report = pipeline::batch_annotate(&manifest, &configs, out.path(), Some(27)).unwrap();
    assert_eq!(report.images.len(), 2);
}

#[test]
fn batch_writes_one_label_per_image() {
    let root = mini_tree(&["Proteus", "Veionella"], 2);
    let manifest = dataset::ingest_dibas(root.path()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let configs = BTreeMap::from([
        (27, cfg(27, Method::kmeans(2, ClusterSelection::Darkest), 3)),
        (33, cfg(33, Method::otsu(Polarity::DarkForeground), 5)),
    ]);
    let report = pipeline::batch_annotate(&manifest, &configs, out.path(), None).unwrap();
    assert_eq!(report.failures, 0);
    assert_eq!(report.images.len(), 4);
    for (entry, r) in manifest.entries.iter().zip(&report.images) {
        assert_eq!(r.image_path, entry.image_path);
        let label = LabelMap::load(out.path().join(&r.label_path)).unwrap();
        assert_eq!(label.dimensions(), (entry.width, entry.height));
        assert!(label.classes().iter().all(|&c| c == 0 || c == entry.species_id));
        let frac = label.foreground().foreground_fraction();
        assert_eq!(Some(frac), r.foreground_fraction);
    }
}

#[test]
fn failures_are_reported_not_fatal() {
    let root = mini_tree(&["Proteus"], 2);
    let manifest = dataset::ingest_dibas(root.path()).unwrap();
    // replace one image with a uniform one: k=2 cannot find two colors
    let flat = RasterImage::filled(96, 80, [200, 200, 200]).unwrap();
    imaging::save_png(&flat, manifest.absolute_path(&manifest.entries[1])).unwrap();
    let out = tempfile::tempdir().unwrap();
    let configs = BTreeMap::from([(27, cfg(27, Method::kmeans(2, ClusterSelection::Darkest), 3))]);
    let report = pipeline::batch_annotate(&manifest, &configs, out.path(), None).unwrap();
    assert_eq!(report.failures, 1);
    assert!(report.images[1].error.as_deref().unwrap().contains("distinct colors"));
}

#[test]
fn config_file_round_trip_and_resolution() {
    let root = mini_tree(&["Proteus", "Veionella"], 1);
    let manifest = dataset::ingest_dibas(root.path()).unwrap();
    let mut file = ConfigFile::default();
    file.species.insert("proteus".into(), cfg(27, Method::kmeans(2, ClusterSelection::Darkest), 3));
    file.species.insert("Veionella".into(), cfg(33, Method::otsu(Polarity::DarkForeground), 5));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("configs.json");
    file.save(&path).unwrap();
    let loaded = ConfigFile::load(&path).unwrap();
    assert_eq!(loaded, file);
    let resolved = loaded.resolve(&manifest).unwrap();
    assert_eq!(resolved.keys().copied().collect::<Vec<_>>(), vec![27, 33]);

    file.species.insert("Veionella".into(), cfg(12, Method::otsu(Polarity::DarkForeground), 5));
    assert!(file.resolve(&manifest).is_err());
}

#[test]
fn manifest_json_round_trip() {
    let root = mini_tree(&["Proteus"], 3);
    let manifest = dataset::split_dataset(&dataset::ingest_dibas(root.path()).unwrap(), (0.34, 0.33, 0.33), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    manifest.save(&path).unwrap();
    assert_eq!(dataset::DatasetManifest::load(&path).unwrap(), manifest);
}
