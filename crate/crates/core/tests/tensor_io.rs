//! NTD dumps through the filesystem.

use prunecrit::error::Error;
use prunecrit::rng::stream_rng;
use prunecrit::synth::{sample_cwda_layer, SynthLayerSpec};
use prunecrit::tensor_store::{load_dump, to_bytes, write_dump, DenseTensor, LayerRecord, NetworkDump, TensorRole};

fn sample_dump() -> NetworkDump {
    let spec = SynthLayerSpec::new(16, 4, 3, 0.05).with_epsilon(0.1);
    let mut rng = stream_rng(5, 0);
    let a = sample_cwda_layer("conv1", &spec, 0.2, &mut rng)
        .unwrap()
        .with_tensor(TensorRole::BnGamma, DenseTensor::from_f64(vec![16], &[0.5; 16]).unwrap())
        .unwrap();
    let b = sample_cwda_layer("conv2", &SynthLayerSpec::new(8, 16, 1, 0.1), 0.0, &mut rng).unwrap();
    NetworkDump::new(vec![a, b]).unwrap().with_meta("source", "test")
}

#[test]
fn disk_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ntd");
    let dump = sample_dump();
    write_dump(&dump, &path).unwrap();
    let loaded = load_dump(&path).unwrap();
    assert_eq!(loaded, dump);
    assert_eq!(std::fs::read(&path).unwrap(), to_bytes(&loaded).unwrap());
}

#[test]
fn zero_layer_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z.ntd");
    let layer = LayerRecord::new("z", DenseTensor::zeros(vec![4, 2, 3, 3])).unwrap();
    write_dump(&NetworkDump::new(vec![layer]).unwrap(), &path).unwrap();
    let loaded = load_dump(&path).unwrap();
    assert_eq!(loaded.layers[0].filters.data(), &[0.0f32; 72][..]);
}

#[test]
fn truncated_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.ntd");
    let layer = LayerRecord::new("z", DenseTensor::zeros(vec![4, 2, 3, 3])).unwrap();
    let bytes = to_bytes(&NetworkDump::new(vec![layer]).unwrap()).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(load_dump(&path), Err(Error::TruncatedPayload { .. })));
}

#[test]
fn missing_file_is_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_dump(dir.path().join("absent.ntd")), Err(Error::IoFailure(_))));
}

#[test]
fn unwritable_target_is_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("no_such_dir").join("x.ntd");
    assert!(matches!(write_dump(&sample_dump(), &path), Err(Error::IoFailure(_))));
}
