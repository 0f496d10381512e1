//! The synthetic world behind the simulation adapter: scenes made of a
//! fixed set of categorical attributes, a deterministic renderer that
//! stamps the scene into every frame, and the line-oriented prompt grammar.

use crate::error::MediaError;
use crate::media::{ClipInfo, Frame, Image, VideoDecoder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;

pub const NUM_ATTRIBUTES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Attribute {
    Subject,
    SubjectColor,
    Background,
    Lighting,
    CameraAngle,
    CameraMotion,
    SubjectMotion,
    Style,
}

impl Attribute {
    pub const ALL: [Attribute; NUM_ATTRIBUTES] = [
        Attribute::Subject,
        Attribute::SubjectColor,
        Attribute::Background,
        Attribute::Lighting,
        Attribute::CameraAngle,
        Attribute::CameraMotion,
        Attribute::SubjectMotion,
        Attribute::Style,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Subject => "subject",
            Attribute::SubjectColor => "subject_color",
            Attribute::Background => "background",
            Attribute::Lighting => "lighting",
            Attribute::CameraAngle => "camera_angle",
            Attribute::CameraMotion => "camera_motion",
            Attribute::SubjectMotion => "subject_motion",
            Attribute::Style => "style",
        }
    }

    /// Legal values. Every value is unique across all attributes so a bare
    /// mention in free text identifies its attribute.
    pub fn alphabet(self) -> &'static [&'static str] {
        match self {
            Attribute::Subject => &["person", "dog", "cat", "car", "bird", "robot"],
            Attribute::SubjectColor => &["red", "blue", "green", "yellow", "white", "black"],
            Attribute::Background => &["beach", "forest", "city street", "kitchen", "desert", "outer space"],
            Attribute::Lighting => &["daylight", "golden hour", "neon", "overcast", "candlelight", "studio"],
            Attribute::CameraAngle => &["eye level", "low angle", "high angle", "overhead", "close up", "wide shot"],
            Attribute::CameraMotion => &["static", "pan left", "pan right", "dolly in", "dolly out", "handheld"],
            Attribute::SubjectMotion => &["walking", "running", "dancing", "jumping", "sitting", "spinning"],
            Attribute::Style => &["photoreal", "anime", "pixel art", "watercolor", "claymation", "film noir"],
        }
    }

    pub fn from_name(name: &str) -> Option<Attribute> {
        let key: String = name
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_lowercase() })
            .collect();
        Attribute::ALL.into_iter().find(|a| a.name() == key)
    }

    pub fn value_index(self, value: &str) -> Option<u8> {
        self.alphabet()
            .iter()
            .position(|v| v.eq_ignore_ascii_case(value.trim()))
            .map(|i| i as u8)
    }
}

/// One categorical value per attribute, stored as alphabet indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SyntheticScene {
    values: [u8; NUM_ATTRIBUTES],
}

impl SyntheticScene {
    pub fn new(values: [u8; NUM_ATTRIBUTES]) -> Result<Self, String> {
        for a in Attribute::ALL {
            if values[a.index()] as usize >= a.alphabet().len() {
                return Err(format!("{} index {} out of range", a.name(), values[a.index()]));
            }
        }
        Ok(Self { values })
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        let mut values = [0u8; NUM_ATTRIBUTES];
        for a in Attribute::ALL {
            values[a.index()] = rng.random_range(0..a.alphabet().len()) as u8;
        }
        Self { values }
    }

    pub fn index_of(&self, a: Attribute) -> u8 {
        self.values[a.index()]
    }

    pub fn get(&self, a: Attribute) -> &'static str {
        a.alphabet()[self.values[a.index()] as usize]
    }

    pub fn with(mut self, a: Attribute, index: u8) -> Self {
        assert!((index as usize) < a.alphabet().len());
        self.values[a.index()] = index;
        self
    }

    pub fn apply(mut self, overrides: &[(Attribute, u8)]) -> Self {
        for &(a, v) in overrides {
            self.values[a.index()] = v;
        }
        self
    }

    /// Attributes whose values differ between the two scenes.
    pub fn diff(&self, other: &SyntheticScene) -> Vec<Attribute> {
        Attribute::ALL
            .into_iter()
            .filter(|a| self.values[a.index()] != other.values[a.index()])
            .collect()
    }

    /// `attribute: value` lines in attribute order.
    pub fn prompt_lines(&self) -> String {
        Attribute::ALL
            .iter()
            .map(|&a| format!("{}: {}", a.name(), self.get(a)))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn names(&self) -> Vec<String> {
        Attribute::ALL.iter().map(|&a| self.get(a).to_string()).collect()
    }

    fn from_names(names: &[String]) -> Result<Self, String> {
        if names.len() != NUM_ATTRIBUTES {
            return Err(format!("expected {NUM_ATTRIBUTES} attribute values, got {}", names.len()));
        }
        let mut values = [0u8; NUM_ATTRIBUTES];
        for (a, n) in Attribute::ALL.iter().zip(names) {
            values[a.index()] = a
                .value_index(n)
                .ok_or_else(|| format!("{n:?} is not a legal {}", a.name()))?;
        }
        Ok(Self { values })
    }
}

impl fmt::Display for SyntheticScene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.prompt_lines())
    }
}

// ---------------------------------------------------------------------------
// Seeded randomness

/// Deterministic generator keyed by the world seed and a call-specific key.
pub fn derive_rng(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

// ---------------------------------------------------------------------------
// Rendering

const MAGIC: [u8; 3] = [0x5A, 0xA5, 0x3C];
pub const MIN_WIDTH: u32 = 2 + NUM_ATTRIBUTES as u32;
pub const MIN_HEIGHT: u32 = 4;

fn checksum(value: u8, attr: usize) -> u8 {
    (value as usize * 31 + attr * 7 + 0x11) as u8
}

const BACKGROUNDS: [[f32; 3]; 6] = [
    [230.0, 210.0, 160.0],
    [40.0, 110.0, 50.0],
    [110.0, 110.0, 120.0],
    [200.0, 190.0, 170.0],
    [220.0, 170.0, 100.0],
    [10.0, 10.0, 30.0],
];
const LIGHTING: [f32; 6] = [1.0, 0.85, 0.6, 0.7, 0.45, 0.95];
const COLORS: [[u8; 3]; 6] = [
    [220, 30, 30],
    [30, 60, 220],
    [30, 200, 60],
    [240, 220, 30],
    [245, 245, 245],
    [15, 15, 15],
];

/// Renders frame `frame_index` of `scene`. Row 0 carries a machine-readable
/// stamp of the scene and frame index; the rest is a picture derived from
/// the attributes, the frame index and the world seed.
pub fn render_frame(scene: &SyntheticScene, frame_index: u32, seed: u64, width: u32, height: u32) -> Image {
    assert!(width >= MIN_WIDTH && height >= MIN_HEIGHT, "frame too small for the scene stamp");
    let (w, h) = (width as usize, height as usize);
    let mut rgb = vec![0u8; w * h * 3];
    let idx = |x: usize, y: usize| (y * w + x) * 3;

    let bg = BACKGROUNDS[scene.index_of(Attribute::Background) as usize];
    let light = LIGHTING[scene.index_of(Attribute::Lighting) as usize];
    let color = COLORS[scene.index_of(Attribute::SubjectColor) as usize];
    let subject = scene.index_of(Attribute::Subject) as usize;
    let angle = scene.index_of(Attribute::CameraAngle) as usize;
    let cam = scene.index_of(Attribute::CameraMotion) as i64;
    let motion = scene.index_of(Attribute::SubjectMotion) as i64;
    let style = scene.index_of(Attribute::Style) as u64;
    let f = frame_index as i64;

    let block_w = (w / 4).max(1) + subject % 3;
    let block_h = (h / 3).max(1) + subject / 3;
    let pan = match cam {
        1 => -f,
        2 => f,
        3 | 4 => 0,
        5 => (mix(f as u64) % 3) as i64 - 1,
        _ => 0,
    };
    let bx = ((w as i64 / 3 + pan + motion * f / 2).rem_euclid(w as i64)) as usize;
    let by = 1 + (angle * (h - 1) / 6).min(h.saturating_sub(block_h + 1));
    let zoom = match cam {
        3 => (f % 4) as usize,
        4 => 3 - (f % 4) as usize,
        _ => 0,
    };

    for y in 1..h {
        for x in 0..w {
            let noise = mix(seed ^ mix(style << 40 | (f as u64) << 20 | (y * w + x) as u64));
            let grain = ((noise % 24) as f32 - 12.0) * if style == 1 { 0.2 } else { 1.0 };
            let inside = x >= bx && x < bx + block_w + zoom && y >= by && y < by + block_h + zoom;
            let px = if inside {
                [color[0] as f32, color[1] as f32, color[2] as f32]
            } else {
                let shade = 1.0 - 0.3 * (y as f32 / h as f32);
                [bg[0] * shade, bg[1] * shade, bg[2] * shade]
            };
            let i = idx(x, y);
            for c in 0..3 {
                let mut v = px[c] * light + grain;
                if style == 2 {
                    v = (v / 64.0).round() * 64.0;
                }
                rgb[i + c] = v.clamp(0.0, 255.0) as u8;
            }
        }
    }

    rgb[idx(0, 0)..idx(0, 0) + 3].copy_from_slice(&MAGIC);
    rgb[idx(1, 0)..idx(1, 0) + 3].copy_from_slice(&[(frame_index >> 8) as u8, frame_index as u8, NUM_ATTRIBUTES as u8]);
    for a in Attribute::ALL {
        let v = scene.index_of(a);
        let i = idx(2 + a.index(), 0);
        rgb[i..i + 3].copy_from_slice(&[v, a.index() as u8, checksum(v, a.index())]);
    }
    for x in MIN_WIDTH as usize..w {
        let i = idx(x, 0);
        rgb[i..i + 3].copy_from_slice(&[0, 0, 0]);
    }
    Image::from_rgb(width, height, rgb).expect("buffer sized from dimensions")
}

/// Reads the scene stamp back out of a rendered frame.
pub fn read_stamp(image: &Image) -> Option<(SyntheticScene, u32)> {
    if image.width() < MIN_WIDTH || image.height() < MIN_HEIGHT || image.pixel(0, 0) != MAGIC {
        return None;
    }
    let [hi, lo, k] = image.pixel(1, 0);
    if k as usize != NUM_ATTRIBUTES {
        return None;
    }
    let mut values = [0u8; NUM_ATTRIBUTES];
    for a in Attribute::ALL {
        let [v, ai, sum] = image.pixel(2 + a.index() as u32, 0);
        if ai as usize != a.index() || sum != checksum(v, a.index()) {
            return None;
        }
        values[a.index()] = v;
    }
    let scene = SyntheticScene::new(values).ok()?;
    Some((scene, (hi as u32) << 8 | lo as u32))
}

// ---------------------------------------------------------------------------
// Prompt grammar

/// Attribute assignments recovered from prompt text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedPrompt {
    pub values: [Option<u8>; NUM_ATTRIBUTES],
    /// Attribute lines whose value matched nothing in the alphabet.
    pub unparsed: Vec<(Attribute, String)>,
    /// Lines that are not attribute assignments.
    pub free_text: Vec<String>,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Longest alphabet value that `rest` starts with, followed by a word break.
fn leading_value(a: Attribute, rest: &str) -> Option<u8> {
    let r = rest.trim_start().to_ascii_lowercase();
    a.alphabet()
        .iter()
        .enumerate()
        .filter(|(_, v)| {
            r.starts_with(*v) && r.as_bytes().get(v.len()).is_none_or(|&b| !is_word_byte(b))
        })
        .max_by_key(|(_, v)| v.len())
        .map(|(i, _)| i as u8)
}

/// Parses newline-separated `attribute: value` lines; anything else is kept
/// as free text. Later assignments win.
pub fn parse_prompt(text: &str) -> ParsedPrompt {
    let mut out = ParsedPrompt::default();
    for line in text.lines() {
        let assignment = line
            .split_once(':')
            .and_then(|(k, rest)| Attribute::from_name(k).map(|a| (a, rest)));
        match assignment {
            Some((a, rest)) => match leading_value(a, rest) {
                Some(v) => out.values[a.index()] = Some(v),
                None => out.unparsed.push((a, rest.trim().to_string())),
            },
            None => out.free_text.push(line.to_string()),
        }
    }
    out
}

/// Every alphabet value mentioned as a whole phrase in `text`.
pub fn mentioned_values(text: &str) -> Vec<(Attribute, u8)> {
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let mut found = Vec::new();
    for a in Attribute::ALL {
        for (i, v) in a.alphabet().iter().enumerate() {
            let hit = lower.match_indices(v).any(|(pos, _)| {
                let before = pos == 0 || !is_word_byte(bytes[pos - 1]);
                let after = bytes.get(pos + v.len()).is_none_or(|&b| !is_word_byte(b));
                before && after
            });
            if hit {
                found.push((a, i as u8));
            }
        }
    }
    found
}

/// Attribute overrides requested by an instruction: explicit assignments
/// plus values mentioned in its free text. Explicit assignments win.
pub fn parse_overrides(text: &str) -> Vec<(Attribute, u8)> {
    let parsed = parse_prompt(text);
    let mut values = [None; NUM_ATTRIBUTES];
    for (a, v) in mentioned_values(&parsed.free_text.join("\n")) {
        values[a.index()] = Some(v);
    }
    for a in Attribute::ALL {
        if let Some(v) = parsed.values[a.index()] {
            values[a.index()] = Some(v);
        }
    }
    Attribute::ALL
        .into_iter()
        .filter_map(|a| values[a.index()].map(|v| (a, v)))
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic video container

const SIMV_MAGIC: &[u8] = b"SIMV1\n";

/// A procedurally rendered clip: the container stores the scene and render
/// settings; decoding renders the requested frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimVideo {
    scene: Vec<String>,
    pub seed: u64,
    pub fps: f64,
    pub duration: f64,
    pub width: u32,
    pub height: u32,
}

impl SimVideo {
    pub fn new(scene: &SyntheticScene, seed: u64, fps: f64, duration: f64, width: u32, height: u32) -> Self {
        Self {
            scene: scene.names(),
            seed,
            fps,
            duration,
            width,
            height,
        }
    }

    pub fn scene(&self) -> Result<SyntheticScene, String> {
        SyntheticScene::from_names(&self.scene)
    }

    pub fn frame_count(&self) -> u32 {
        ((self.duration * self.fps).round() as u32).max(1)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = SIMV_MAGIC.to_vec();
        out.extend(serde_json::to_vec(self).expect("plain data serializes"));
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, MediaError> {
        let body = bytes
            .strip_prefix(SIMV_MAGIC)
            .ok_or_else(|| MediaError::Unsupported("not a synthetic video".into()))?;
        let v: SimVideo =
            serde_json::from_slice(body).map_err(|e| MediaError::Decode(format!("synthetic video header: {e}")))?;
        v.scene().map_err(MediaError::Decode)?;
        if !(v.fps.is_finite() && v.fps > 0.0 && v.duration.is_finite() && v.duration > 0.0) {
            return Err(MediaError::Decode("synthetic video needs positive fps and duration".into()));
        }
        if v.width < MIN_WIDTH || v.height < MIN_HEIGHT {
            return Err(MediaError::Decode(format!(
                "synthetic video must be at least {MIN_WIDTH}x{MIN_HEIGHT}"
            )));
        }
        Ok(v)
    }

    fn nearest_frame(&self, t: f64) -> u32 {
        let last = self.frame_count() - 1;
        ((t * self.fps).round().max(0.0) as u32).min(last)
    }

    pub fn render(&self, frame_index: u32) -> Frame {
        let scene = self.scene().expect("validated on decode");
        let ts = (frame_index as f64 / self.fps).min(self.duration);
        Frame::new(ts, render_frame(&scene, frame_index, self.seed, self.width, self.height))
    }
}

/// [`VideoDecoder`] for [`SimVideo`] containers.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimVideoDecoder;

impl VideoDecoder for SimVideoDecoder {
    fn accepts(&self, media: &[u8]) -> bool {
        media.starts_with(SIMV_MAGIC)
    }

    fn probe(&self, media: &[u8]) -> Result<ClipInfo, MediaError> {
        let v = SimVideo::decode(media)?;
        Ok(ClipInfo {
            duration: v.duration,
            fps: v.fps,
            width: v.width,
            height: v.height,
        })
    }

    fn frames_at(&self, media: &[u8], timestamps: &[f64]) -> Result<Vec<Frame>, MediaError> {
        let v = SimVideo::decode(media)?;
        Ok(timestamps.iter().map(|&t| v.render(v.nearest_frame(t))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(vals: [u8; 8]) -> SyntheticScene {
        SyntheticScene::new(vals).unwrap()
    }

    #[test]
    fn alphabets_are_globally_unique() {
        let mut all: Vec<&str> = Attribute::ALL.iter().flat_map(|a| a.alphabet().iter().copied()).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), n);
        for v in &all {
            let hits: Vec<_> = all.iter().filter(|w| *w != v && w.contains(v)).collect();
            assert!(hits.is_empty(), "{v} is a substring of {hits:?}");
        }
    }

    #[test]
    fn stamp_round_trip() {
        let s = scene([1, 2, 3, 4, 5, 0, 1, 2]);
        let img = render_frame(&s, 300, 9, 32, 18);
        assert_eq!(read_stamp(&img), Some((s, 300)));
        let png = Image::decode(&img.to_png()).unwrap();
        assert_eq!(read_stamp(&png), Some((s, 300)));
    }

    #[test]
    fn render_is_deterministic_and_scene_sensitive() {
        let s = scene([0; 8]);
        assert_eq!(render_frame(&s, 3, 1, 32, 18), render_frame(&s, 3, 1, 32, 18));
        assert_ne!(render_frame(&s, 3, 1, 32, 18), render_frame(&s.with(Attribute::CameraAngle, 4), 3, 1, 32, 18));
        assert_ne!(render_frame(&s, 3, 1, 32, 18), render_frame(&s, 4, 1, 32, 18));
    }

    #[test]
    fn unstamped_image_is_rejected() {
        let img = Image::from_rgb(16, 8, vec![7; 16 * 8 * 3]).unwrap();
        assert_eq!(read_stamp(&img), None);
    }

    #[test]
    fn prompt_grammar() {
        let text = "A clip.\nsubject: dog\nSubject Color: Red, bright\ncamera_angle: close up shot\nstyle: unicorn\nlighting: neon. Help";
        let p = parse_prompt(text);
        assert_eq!(p.values[Attribute::Subject.index()], Some(1));
        assert_eq!(p.values[Attribute::SubjectColor.index()], Some(0));
        assert_eq!(p.values[Attribute::CameraAngle.index()], Some(4));
        assert_eq!(p.values[Attribute::Lighting.index()], Some(2));
        assert_eq!(p.values[Attribute::Style.index()], None);
        assert_eq!(p.unparsed, vec![(Attribute::Style, "unicorn".to_string())]);
        assert_eq!(p.free_text, vec!["A clip.".to_string()]);
        let s = scene([5, 4, 3, 2, 1, 0, 5, 4]);
        let back = parse_prompt(&s.prompt_lines());
        assert!(back.values.iter().all(Option::is_some));
        assert!(back.unparsed.is_empty());
    }

    #[test]
    fn mentions_require_word_boundaries() {
        assert_eq!(mentioned_values("make it pixel art"), vec![(Attribute::Style, 2)]);
        assert!(mentioned_values("redder catalogue").is_empty());
        let o = parse_overrides("go for film noir\nstyle: anime");
        assert_eq!(o, vec![(Attribute::Style, 1)]);
    }

    #[test]
    fn container_round_trip_and_nearest_frame() {
        let v = SimVideo::new(&scene([0, 1, 2, 3, 4, 5, 0, 1]), 4, 8.0, 8.0, 32, 18);
        let bytes = v.encode();
        assert_eq!(SimVideo::decode(&bytes).unwrap(), v);
        let frames = SimVideoDecoder.frames_at(&bytes, &[1.0, 3.0, 7.99, 100.0]).unwrap();
        let ts: Vec<f64> = frames.iter().map(|f| f.timestamp).collect();
        assert_eq!(ts, vec![1.0, 3.0, 7.875, 7.875]);
        assert!(SimVideo::decode(b"SIMV1\n{}").is_err());
        assert!(matches!(SimVideo::decode(b"mp4"), Err(MediaError::Unsupported(_))));
    }
}
