//! Fixtures shared by the criterion benches.

use ovir_core::pipeline::fuse_sequence;
use ovir_core::synth::{benchmark, stress_fixture, BenchmarkSpec, NoiseSpec, StressFixture, StressSpec};
use ovir_core::{FusionConfig, MemoryBank, ScenePointCloud};

/// A stress fixture and a bank already holding its `instances` instances.
pub fn warm_stress(spec: &StressSpec) -> (StressFixture, MemoryBank) {
    let fx = stress_fixture(spec).expect("valid stress spec");
    let mut bank = MemoryBank::new(FusionConfig::default()).expect("default config");
    bank.fuse_frame(&fx.warmup, &fx.cloud).expect("warmup frame");
    (fx, bank)
}

/// A finalized bank over the noisy synthetic benchmark.
pub fn noisy_bank(seed: u64) -> (ScenePointCloud, MemoryBank) {
    let b = benchmark(&BenchmarkSpec {
        noise: NoiseSpec::benchmark(),
        seed,
        ..Default::default()
    })
    .expect("benchmark scene");
    let (bank, _) = fuse_sequence(&b.scene.cloud, b.frames.into_iter().map(Ok), &FusionConfig::default())
        .expect("fusion");
    (b.scene.cloud, bank)
}
