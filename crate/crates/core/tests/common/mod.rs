#![allow(dead_code)]

use reauthor_core::adapters::sim::{SimulationBackend, SimulationConfig, SimulationParams, SyntheticScene};
use reauthor_core::adapters::{AdapterSet, Comparator, Generator};
use reauthor_core::clock::ManualClock;
use reauthor_core::env::Env;
use reauthor_core::media::Frame;
use reauthor_core::model::{DifferenceReport, Prompt, VideoClip};
use reauthor_core::AdapterError;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

pub struct World {
    pub env: Env,
    pub backend: Arc<SimulationBackend>,
    pub adapters: AdapterSet,
    pub truth: SyntheticScene,
    pub clip: VideoClip,
}

/// A simulated world with a manual clock and one source clip drawn from
/// `clip_seed`.
pub fn world(seed: u64, params: SimulationParams, clip_seed: u64) -> World {
    let env = Env::in_memory().with_clock(Arc::new(ManualClock::epoch()));
    let config = SimulationConfig::new(seed).with_params(params);
    let backend = Arc::new(SimulationBackend::new(config.clone(), env.clone()));
    let adapters = AdapterSet::simulation(config, &env);
    let truth = random_scene(clip_seed);
    let clip = backend.render_clip(&truth).unwrap();
    World {
        env,
        backend,
        adapters,
        truth,
        clip,
    }
}

pub fn random_scene(seed: u64) -> SyntheticScene {
    use rand::SeedableRng;
    SyntheticScene::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
}

pub struct CountingComparator {
    pub inner: Arc<dyn Comparator>,
    pub calls: AtomicUsize,
}

impl Comparator for CountingComparator {
    fn compare(&self, original: &VideoClip, generated: &VideoClip, prompt: &Prompt) -> Result<DifferenceReport, AdapterError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.compare(original, generated, prompt)
    }
}

/// Generator that counts calls and fails from call `fail_at` onwards.
pub struct CountingGenerator {
    pub inner: Arc<dyn Generator>,
    pub calls: AtomicUsize,
    pub fail_at: Option<usize>,
}

impl Generator for CountingGenerator {
    fn generate(&self, prompt: &Prompt, first_frame: &Frame) -> Result<VideoClip, AdapterError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        if self.fail_at.is_some_and(|k| n >= k) {
            return Err(AdapterError::Unavailable("generator offline".into()));
        }
        self.inner.generate(prompt, first_frame)
    }
}

/// Wraps the comparator and generator of `adapters` with counters.
pub fn counted(
    adapters: &AdapterSet,
    fail_at: Option<usize>,
) -> (AdapterSet, Arc<CountingGenerator>, Arc<CountingComparator>) {
    let generator = Arc::new(CountingGenerator {
        inner: adapters.generator.clone(),
        calls: AtomicUsize::new(0),
        fail_at,
    });
    let comparator = Arc::new(CountingComparator {
        inner: adapters.comparator.clone(),
        calls: AtomicUsize::new(0),
    });
    let mut set = adapters.clone();
    set.generator = generator.clone();
    set.comparator = comparator.clone();
    (set, generator, comparator)
}
