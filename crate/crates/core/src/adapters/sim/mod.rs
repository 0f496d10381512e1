//! Deterministic stand-in for every model role.
//!
//! Clips are [`SimVideo`] containers rendering a [`SyntheticScene`]; every
//! frame carries a stamp of its scene, which is what the simulated models
//! "see". Prompts use the `attribute: value` grammar from [`world`]. All
//! randomness is drawn from generators keyed by the world seed and the call
//! inputs, so results never depend on call order or concurrency.

pub mod world;

pub use self::world::{
    parse_overrides, parse_prompt, read_stamp, render_frame, Attribute, SimVideo, SimVideoDecoder,
    SyntheticScene, NUM_ATTRIBUTES,
};

use self::world::derive_rng;
use super::templates::FIRST_FRAME_MARKER;
use super::{check_transcript, ChatAssistant, Comparator, Describer, Embedder, Generator, ImageEditor};
use crate::env::Env;
use crate::error::{AdapterError, MediaError, ValidationError};
use crate::media::Frame;
use crate::model::{
    ChatMessage, ChatRole, DifferenceReport, Discrepancy, DiscrepancyCategory, Prompt, Provenance, VideoClip,
    DEFAULT_MAX_CLIP_SECONDS,
};
use crate::similarity::EmbeddingVector;
use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::time::Duration;

pub const DEFAULT_EMBEDDING_DIMENSION: usize = 512;
/// Upper bound on the per-frame jitter added to simulated embeddings.
pub const EMBEDDING_JITTER: f64 = 1e-3;

/// Behaviour knobs of the simulated models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationParams {
    /// Attributes the describer gets wrong in its first prompt.
    pub init_errors: usize,
    /// Wrong attributes the comparator corrects per call.
    pub fix_per_iter: usize,
    /// Probability that the comparator, given an already-correct prompt,
    /// changes one correct attribute anyway.
    pub p_drift: f64,
    pub clip_duration: f64,
    pub fps: f64,
    pub width: u32,
    pub height: u32,
    /// Artificial delay added to every call.
    pub latency_ms: u64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        Self {
            init_errors: 3,
            fix_per_iter: 2,
            p_drift: 0.0,
            clip_duration: DEFAULT_MAX_CLIP_SECONDS,
            fps: 8.0,
            width: 48,
            height: 27,
            latency_ms: 0,
        }
    }
}

impl SimulationParams {
    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(0.0..=1.0).contains(&self.p_drift) {
            return Err(ValidationError::new("p_drift", "must lie in [0, 1]"));
        }
        if self.init_errors > NUM_ATTRIBUTES {
            return Err(ValidationError::new(
                "init_errors",
                format!("at most {NUM_ATTRIBUTES} attributes can be wrong"),
            ));
        }
        if !(self.clip_duration.is_finite() && self.clip_duration > 0.0 && self.clip_duration <= DEFAULT_MAX_CLIP_SECONDS)
        {
            return Err(ValidationError::new("clip_duration", "must lie in (0, 8] seconds"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(ValidationError::new("fps", "must be positive"));
        }
        if self.width < world::MIN_WIDTH || self.height < world::MIN_HEIGHT {
            return Err(ValidationError::new(
                "width",
                format!("frames must be at least {}x{}", world::MIN_WIDTH, world::MIN_HEIGHT),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub seed: u64,
    #[serde(default)]
    pub params: SimulationParams,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
}

fn default_dimension() -> usize {
    DEFAULT_EMBEDDING_DIMENSION
}

impl SimulationConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            params: SimulationParams::default(),
            dimension: DEFAULT_EMBEDDING_DIMENSION,
        }
    }

    pub fn with_params(mut self, params: SimulationParams) -> Self {
        self.params = params;
        self
    }
}

pub struct SimulationBackend {
    config: SimulationConfig,
    env: Env,
    /// Fixed random projection: one vector per (attribute, value).
    projection: Vec<Vec<Vec<f64>>>,
    diagnostics: Mutex<Vec<String>>,
}

impl SimulationBackend {
    pub fn new(config: SimulationConfig, env: Env) -> Self {
        let d = config.dimension;
        let projection = Attribute::ALL
            .iter()
            .map(|a| {
                (0..a.alphabet().len())
                    .map(|v| {
                        let mut rng = derive_rng(config.seed, &[b"projection", a.name().as_bytes(), &[v as u8]]);
                        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
                    })
                    .collect()
            })
            .collect();
        Self {
            config,
            env,
            projection,
            diagnostics: Mutex::new(Vec::new()),
        }
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    /// Notes about prompt tokens the generator could not interpret.
    pub fn diagnostics(&self) -> Vec<String> {
        self.diagnostics.lock().clone()
    }

    fn pause(&self) {
        if self.config.params.latency_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.config.params.latency_ms));
        }
    }

    /// Renders and stores a clip showing `scene`, exactly as the generator
    /// would for a prompt that specifies every attribute correctly.
    pub fn render_clip(&self, scene: &SyntheticScene) -> Result<VideoClip, MediaError> {
        let p = &self.config.params;
        let video = SimVideo::new(scene, self.config.seed, p.fps, p.clip_duration, p.width, p.height);
        self.env.store_clip(&video.encode())
    }

    /// The scene a clip shows, read from the stamp of its first frame.
    pub fn scene_of_clip(&self, clip: &VideoClip) -> Result<SyntheticScene, AdapterError> {
        let frame = self.env.frame_at(clip, 0.0)?;
        scene_of_frame(&frame).map(|(s, _)| s)
    }

    pub fn render_still(&self, scene: &SyntheticScene, frame_index: u32, width: u32, height: u32) -> Frame {
        let ts = frame_index as f64 / self.config.params.fps;
        Frame::new(ts, render_frame(scene, frame_index, self.config.seed, width, height))
    }

    fn seeded_default(&self, a: Attribute) -> u8 {
        let mut rng = derive_rng(self.config.seed, &[b"default", a.name().as_bytes()]);
        rng.random_range(0..a.alphabet().len()) as u8
    }

    fn prompt(&self, text: String, provenance: Provenance) -> Result<Prompt, AdapterError> {
        Ok(Prompt::new(text, provenance, self.env.clock.now())?)
    }

    /// The scene the generator renders for `prompt` given a first frame.
    /// Unspecified attributes follow the first frame; unparseable ones fall
    /// back to a seeded default and are logged.
    pub fn scene_for_prompt(&self, prompt: &str, anchor: Option<&SyntheticScene>) -> SyntheticScene {
        let parsed = parse_prompt(prompt);
        let mut values = [0u8; NUM_ATTRIBUTES];
        for a in Attribute::ALL {
            values[a.index()] = match parsed.values[a.index()] {
                Some(v) => v,
                None => {
                    if let Some((_, token)) = parsed.unparsed.iter().rev().find(|(u, _)| *u == a) {
                        self.diagnostics.lock().push(format!(
                            "{}: could not interpret {token:?}, using seeded default",
                            a.name()
                        ));
                        self.seeded_default(a)
                    } else {
                        anchor.map(|s| s.index_of(a)).unwrap_or_else(|| self.seeded_default(a))
                    }
                }
            };
        }
        SyntheticScene::new(values).expect("all values drawn from alphabets")
    }
}

fn scene_of_frame(frame: &Frame) -> Result<(SyntheticScene, u32), AdapterError> {
    read_stamp(&frame.image)
        .ok_or_else(|| AdapterError::Media(MediaError::Unsupported("frame carries no synthetic scene stamp".into())))
}

fn category(a: Attribute) -> DiscrepancyCategory {
    match a {
        Attribute::Subject => DiscrepancyCategory::Object,
        Attribute::SubjectColor => DiscrepancyCategory::Color,
        Attribute::Background | Attribute::CameraAngle => DiscrepancyCategory::Composition,
        Attribute::Lighting => DiscrepancyCategory::Lighting,
        Attribute::CameraMotion | Attribute::SubjectMotion => DiscrepancyCategory::Motion,
        Attribute::Style => DiscrepancyCategory::Other,
    }
}

fn other_value(rng: &mut impl Rng, a: Attribute, current: u8) -> u8 {
    let n = a.alphabet().len() as u8;
    (current + rng.random_range(1..n)) % n
}

const SCENE_HEADER: &str = "Scene description.";

impl Describer for SimulationBackend {
    fn initial_prompt(&self, clip: &VideoClip) -> Result<Prompt, AdapterError> {
        self.pause();
        let truth = self.scene_of_clip(clip)?;
        let mut rng = derive_rng(self.config.seed, &[b"describe", clip.id().as_str().as_bytes()]);
        let mut attrs = Attribute::ALL.to_vec();
        attrs.shuffle(&mut rng);
        let mut scene = truth;
        for &a in attrs.iter().take(self.config.params.init_errors) {
            scene = scene.with(a, other_value(&mut rng, a, truth.index_of(a)));
        }
        let text = format!(
            "Reverse-engineered description of a {:.1} second clip.\n{}",
            clip.duration(),
            scene.prompt_lines()
        );
        self.prompt(text, Provenance::Initial)
    }
}

impl Generator for SimulationBackend {
    fn generate(&self, prompt: &Prompt, first_frame: &Frame) -> Result<VideoClip, AdapterError> {
        self.pause();
        let anchor = read_stamp(&first_frame.image).map(|(s, _)| s);
        let scene = self.scene_for_prompt(prompt.text(), anchor.as_ref());
        Ok(self.render_clip(&scene)?)
    }
}

impl Comparator for SimulationBackend {
    fn compare(
        &self,
        original: &VideoClip,
        generated: &VideoClip,
        current: &Prompt,
    ) -> Result<DifferenceReport, AdapterError> {
        self.pause();
        let truth = self.scene_of_clip(original)?;
        let seen = self.scene_of_clip(generated)?;
        let provenance = serde_json::to_vec(&current.provenance()).expect("plain enum");
        let mut rng = derive_rng(
            self.config.seed,
            &[
                b"compare",
                original.id().as_str().as_bytes(),
                current.text().as_bytes(),
                &provenance,
            ],
        );

        let wrong = seen.diff(&truth);
        let discrepancies = wrong
            .iter()
            .map(|&a| Discrepancy {
                category: category(a),
                description: format!("{}: expected {}, generated {}", a.name(), truth.get(a), seen.get(a)),
            })
            .collect();

        let mut revised = seen;
        let mut to_fix = wrong.clone();
        to_fix.shuffle(&mut rng);
        for &a in to_fix.iter().take(self.config.params.fix_per_iter) {
            revised = revised.with(a, truth.index_of(a));
        }
        if wrong.is_empty() && rng.random::<f64>() < self.config.params.p_drift {
            let a = Attribute::ALL[rng.random_range(0..NUM_ATTRIBUTES)];
            revised = revised.with(a, other_value(&mut rng, a, truth.index_of(a)));
        }

        let text = if revised == seen && wrong.is_empty() {
            current.text().to_string()
        } else {
            format!("{SCENE_HEADER}\n{}", revised.prompt_lines())
        };
        Ok(DifferenceReport::new(
            discrepancies,
            self.prompt(text, Provenance::Refined { iteration: 0 })?,
        )?)
    }
}

impl ImageEditor for SimulationBackend {
    fn edit(&self, base: &Frame, instruction: &str) -> Result<Frame, AdapterError> {
        self.pause();
        if instruction.trim().is_empty() {
            return Err(ValidationError::new("instruction", "must not be empty").into());
        }
        let overrides = parse_overrides(instruction);
        if overrides.is_empty() {
            return Ok(base.clone());
        }
        let (scene, index) = scene_of_frame(base)?;
        let edited = scene.apply(&overrides);
        Ok(Frame::new(
            base.timestamp,
            render_frame(&edited, index, self.config.seed, base.image.width(), base.image.height()),
        ))
    }
}

impl Embedder for SimulationBackend {
    fn embed(&self, frame: &Frame) -> Result<EmbeddingVector<f64>, AdapterError> {
        let (scene, index) = scene_of_frame(frame)?;
        let d = self.config.dimension;
        let mut v = vec![0.0; d];
        for a in Attribute::ALL {
            for (acc, x) in v.iter_mut().zip(&self.projection[a.index()][scene.index_of(a) as usize]) {
                *acc += x;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut rng = derive_rng(self.config.seed, &[b"jitter", &index.to_le_bytes()]);
        let jitter: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jnorm = jitter.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        for (x, j) in v.iter_mut().zip(&jitter) {
            *x = *x / norm + EMBEDDING_JITTER * j / jnorm;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        Ok(EmbeddingVector::with_dimension(v, d)?)
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }
}

impl ChatAssistant for SimulationBackend {
    fn assist(&self, transcript: &[ChatMessage]) -> Result<ChatMessage, AdapterError> {
        check_transcript(transcript)?;
        self.pause();
        let last = &transcript.last().expect("checked").text;
        let goal = parse_prompt(last).free_text.join("\n");
        let overrides = world::mentioned_values(&goal);

        if last.contains(FIRST_FRAME_MARKER) {
            if overrides.is_empty() {
                return Ok(ChatMessage::assistant("Keep the first frame as it is."));
            }
            let lines: Vec<String> = overrides
                .iter()
                .map(|&(a, v)| format!("{}: {}", a.name(), a.alphabet()[v as usize]))
                .collect();
            return Ok(ChatMessage::assistant(format!(
                "Edit the image so that:\n{}",
                lines.join("\n")
            )));
        }

        // Start from the most recent message that carries a full prompt.
        let base = transcript
            .iter()
            .rev()
            .map(|m| parse_prompt(&m.text))
            .find(|p| p.values.iter().any(Option::is_some))
            .unwrap_or_default();
        let mut values = base.values;
        for &(a, v) in &overrides {
            values[a.index()] = Some(v);
        }
        let lines: Vec<String> = Attribute::ALL
            .iter()
            .filter_map(|&a| values[a.index()].map(|v| format!("{}: {}", a.name(), a.alphabet()[v as usize])))
            .collect();
        let reply = if lines.is_empty() {
            "Describe the scene as attribute lines so I can rewrite it.".to_string()
        } else {
            format!("Rewritten scene description.\n{}", lines.join("\n"))
        };
        debug_assert!(transcript.iter().all(|m| m.role == ChatRole::User || m.role == ChatRole::Assistant));
        Ok(ChatMessage::assistant(reply))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::templates;
    use crate::clock::ManualClock;
    use crate::similarity::{cosine, frame_aligned_similarity, DEFAULT_FRAMES_PER_CLIP};
    use std::sync::Arc;

    fn setup(params: SimulationParams) -> (Env, SimulationBackend) {
        let env = Env::in_memory().with_clock(Arc::new(ManualClock::epoch()));
        let b = SimulationBackend::new(SimulationConfig::new(42).with_params(params), env.clone());
        (env, b)
    }

    fn truth() -> SyntheticScene {
        SyntheticScene::new([1, 0, 2, 3, 4, 1, 2, 0]).unwrap()
    }

    fn refined(p: &Prompt) -> Prompt {
        p.clone().with_provenance(Provenance::Refined { iteration: 1 })
    }

    fn wrong_count(b: &SimulationBackend, text: &str, truth: &SyntheticScene) -> usize {
        b.scene_for_prompt(text, Some(truth)).diff(truth).len()
    }

    #[test]
    fn describer_corrupts_exactly_init_errors() {
        for k in [0, 3, 8] {
            let (_, b) = setup(SimulationParams {
                init_errors: k,
                ..Default::default()
            });
            let clip = b.render_clip(&truth()).unwrap();
            let p = b.initial_prompt(&clip).unwrap();
            assert_eq!(p.provenance(), Provenance::Initial);
            let parsed = parse_prompt(p.text());
            assert!(parsed.values.iter().all(Option::is_some));
            assert_eq!(wrong_count(&b, p.text(), &truth()), k, "init_errors={k}");
            assert_eq!(b.initial_prompt(&clip).unwrap().text(), p.text());
        }
    }

    #[test]
    fn generator_is_deterministic_and_faithful() {
        let (env, b) = setup(SimulationParams::default());
        let clip = b.render_clip(&truth()).unwrap();
        let ff = env.frame_at(&clip, 0.0).unwrap();
        let p = Prompt::new(truth().prompt_lines(), Provenance::Initial, env.clock.now()).unwrap();
        let g1 = b.generate(&p, &ff).unwrap();
        let g2 = b.generate(&p, &ff).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(env.store.get(g1.media_ref()).unwrap(), env.store.get(g2.media_ref()).unwrap());
        let s = frame_aligned_similarity(&env, &clip, &g1, &b, DEFAULT_FRAMES_PER_CLIP).unwrap();
        assert!((s.value() - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn one_wrong_attribute_scores_between_all_wrong_and_identical() {
        let (env, b) = setup(SimulationParams::default());
        let t = truth();
        let clip = b.render_clip(&t).unwrap();
        let ff = env.frame_at(&clip, 0.0).unwrap();
        let score = |scene: SyntheticScene| {
            let p = Prompt::new(scene.prompt_lines(), Provenance::Initial, env.clock.now()).unwrap();
            let g = b.generate(&p, &ff).unwrap();
            frame_aligned_similarity(&env, &clip, &g, &b, 16).unwrap().value()
        };
        let one = score(t.with(Attribute::Lighting, 0));
        let mut all = t;
        for a in Attribute::ALL {
            all = all.with(a, (t.index_of(a) + 1) % a.alphabet().len() as u8);
        }
        let all_wrong = score(all);
        assert!(all_wrong < one && one < 1.0, "all={all_wrong} one={one}");
    }

    #[test]
    fn unparseable_tokens_fall_back_and_are_reported() {
        let (_, b) = setup(SimulationParams::default());
        let s = b.scene_for_prompt("style: unicorn", Some(&truth()));
        assert_eq!(s.index_of(Attribute::Style), b.seeded_default(Attribute::Style));
        assert_eq!(s.index_of(Attribute::Subject), truth().index_of(Attribute::Subject));
        assert!(b.diagnostics().iter().any(|d| d.contains("unicorn")));
    }

    #[test]
    fn comparator_fixed_point() {
        let (env, b) = setup(SimulationParams::default());
        let clip = b.render_clip(&truth()).unwrap();
        let cur = Prompt::new(format!("Free text.\n{}", truth().prompt_lines()), Provenance::Initial, env.clock.now()).unwrap();
        let r = b.compare(&clip, &clip, &cur).unwrap();
        assert!(r.discrepancies().is_empty());
        assert_eq!(r.revised_prompt().text(), cur.text());
    }

    #[test]
    fn comparator_fixes_up_to_budget() {
        let (env, b) = setup(SimulationParams::default());
        let t = truth();
        let clip = b.render_clip(&t).unwrap();
        let bad = t
            .with(Attribute::Subject, 5)
            .with(Attribute::Style, 3)
            .with(Attribute::Lighting, 0);
        let gen = b.render_clip(&bad).unwrap();
        let cur = Prompt::new(bad.prompt_lines(), Provenance::Initial, env.clock.now()).unwrap();
        let r = b.compare(&clip, &gen, &cur).unwrap();
        assert_eq!(r.discrepancies().len(), 3);
        assert_eq!(wrong_count(&b, r.revised_prompt().text(), &t), 1);
    }

    #[test]
    fn forced_drift_breaks_one_attribute() {
        let (env, b) = setup(SimulationParams {
            p_drift: 1.0,
            ..Default::default()
        });
        let clip = b.render_clip(&truth()).unwrap();
        let cur = Prompt::new(truth().prompt_lines(), Provenance::Initial, env.clock.now()).unwrap();
        let r = b.compare(&clip, &clip, &cur).unwrap();
        assert!(r.discrepancies().is_empty());
        assert_eq!(wrong_count(&b, r.revised_prompt().text(), &truth()), 1);
        // Stateless: same inputs, same drift.
        let again = b.compare(&clip, &clip, &cur).unwrap();
        assert_eq!(again.revised_prompt().text(), r.revised_prompt().text());
        let other = b.compare(&clip, &clip, &refined(&cur)).unwrap();
        assert_eq!(wrong_count(&b, other.revised_prompt().text(), &truth()), 1);
    }

    #[test]
    fn image_edit_identity_and_override() {
        let (env, b) = setup(SimulationParams::default());
        let clip = b.render_clip(&truth()).unwrap();
        let base = env.frame_at(&clip, 0.0).unwrap();
        let same = b.edit(&base, "make it feel cozier").unwrap();
        assert_eq!(same.image, base.image);
        let edited = b.edit(&base, "camera_angle: overhead").unwrap();
        assert_ne!(edited.image, base.image);
        let direct = b.render_still(&truth().with(Attribute::CameraAngle, 3), 0, base.image.width(), base.image.height());
        assert_eq!(edited.image, direct.image);
        assert!(b.edit(&base, "  ").is_err());
    }

    #[test]
    fn embedder_properties() {
        let (env, b) = setup(SimulationParams::default());
        let t = truth();
        let f = env.frame_at(&b.render_clip(&t).unwrap(), 1.0).unwrap();
        let e1 = b.embed(&f).unwrap();
        assert_eq!(e1, b.embed(&f).unwrap());
        assert_eq!(e1.dimension(), 512);
        assert!((e1.norm() - 1.0).abs() < 1e-12);
        let mut other = t;
        for a in Attribute::ALL {
            other = other.with(a, (t.index_of(a) + 3) % 6);
        }
        let g = env.frame_at(&b.render_clip(&other).unwrap(), 1.0).unwrap();
        let f2 = env.frame_at(&b.render_clip(&t).unwrap(), 2.0).unwrap();
        let same_scene = cosine(&e1, &b.embed(&f2).unwrap()).unwrap().value();
        let diff_scene = cosine(&e1, &b.embed(&g).unwrap()).unwrap().value();
        assert!(diff_scene < same_scene);
        assert!(same_scene > 1.0 - 1e-5);
    }

    #[test]
    fn chat_rewrites_one_attribute() {
        let (_, b) = setup(SimulationParams::default());
        let prompt = format!("Scene description.\n{}", truth().prompt_lines());
        let msg = templates::assist_starter("make it pixel art", &prompt);
        let reply = b.assist(&[ChatMessage::user(msg)]).unwrap();
        assert_eq!(reply.role, ChatRole::Assistant);
        let before = b.scene_for_prompt(&prompt, None);
        let after = b.scene_for_prompt(&reply.text, None);
        assert_eq!(after.diff(&before), vec![Attribute::Style]);
        assert_eq!(after.get(Attribute::Style), "pixel art");
        assert!(b.assist(&[]).is_err());
    }

    #[test]
    fn chat_first_frame_instruction() {
        let (_, b) = setup(SimulationParams::default());
        let reply = b
            .assist(&[ChatMessage::user(templates::first_frame_request("a watercolor look"))])
            .unwrap();
        assert_eq!(parse_overrides(&reply.text), vec![(Attribute::Style, 3)]);
    }
}
