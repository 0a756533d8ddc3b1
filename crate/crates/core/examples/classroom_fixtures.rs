//! Writes the classroom pair collections under `tests/fixtures/`.

use fisheye_distance::dataset::{save_detections, save_ground_truth};
use fisheye_distance::synth::{generate_collection, CollectionSpec};
use fisheye_distance::CameraParams;
use std::path::PathBuf;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"));
    let camera = CameraParams::synthetic_default();
    for (name, spec) in [
        ("fixed", CollectionSpec::FIXED_HEIGHT),
        ("varying", CollectionSpec::VARYING_HEIGHT),
    ] {
        let dir = root.join(name);
        std::fs::create_dir_all(&dir)?;
        let (det, gt) = generate_collection(name, &spec, 0, &camera)?;
        save_detections(dir.join("detections.jsonl"), &det)?;
        save_ground_truth(dir.join("gt.csv"), &gt)?;
        camera.save(dir.join("camera.json"))?;
        println!(
            "{name}: {} detections, {} pairs",
            det.detections.len(),
            gt.pairs.len()
        );
    }
    Ok(())
}
