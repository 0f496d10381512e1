use super::{ClipInfo, Frame, Image, VideoDecoder};
use crate::error::MediaError;
use serde::Deserialize;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

/// Frame extraction through the `ffprobe`/`ffmpeg` binaries.
#[derive(Clone, Debug)]
pub struct FfmpegDecoder {
    ffmpeg: PathBuf,
    ffprobe: PathBuf,
    timeout: Duration,
}

impl FfmpegDecoder {
    /// Finds both binaries on `PATH` and checks that they run.
    pub fn locate() -> Result<Self, MediaError> {
        Self::with_binaries("ffmpeg", "ffprobe")
    }

    pub fn with_binaries(ffmpeg: impl Into<PathBuf>, ffprobe: impl Into<PathBuf>) -> Result<Self, MediaError> {
        let d = Self {
            ffmpeg: ffmpeg.into(),
            ffprobe: ffprobe.into(),
            timeout: Duration::from_secs(60),
        };
        for bin in [&d.ffmpeg, &d.ffprobe] {
            let ok = Command::new(bin)
                .arg("-version")
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status()
                .map(|s| s.success())
                .unwrap_or(false);
            if !ok {
                return Err(MediaError::ExtractorUnavailable(format!(
                    "{} could not be executed",
                    bin.display()
                )));
            }
        }
        Ok(d)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn run(&self, bin: &Path, args: &[&std::ffi::OsStr]) -> Result<Vec<u8>, MediaError> {
        let mut child = Command::new(bin)
            .args(args)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| MediaError::ExtractorUnavailable(format!("{}: {e}", bin.display())))?;
        let mut stdout = child.stdout.take().expect("piped");
        let mut stderr = child.stderr.take().expect("piped");
        let out_reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            stdout.read_to_end(&mut buf).map(|_| buf)
        });
        let err_reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });
        let deadline = Instant::now() + self.timeout;
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(MediaError::Decode(format!(
                    "{} timed out after {:?}",
                    bin.display(),
                    self.timeout
                )));
            }
            std::thread::sleep(Duration::from_millis(10));
        };
        let out = out_reader
            .join()
            .map_err(|_| MediaError::Io("stdout reader panicked".into()))??;
        let diag = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(MediaError::Decode(format!(
                "{} exited with {status}: {}",
                bin.display(),
                diag.trim()
            )));
        }
        Ok(out)
    }

    fn spill(media: &[u8]) -> Result<tempfile::NamedTempFile, MediaError> {
        let mut f = tempfile::NamedTempFile::new()?;
        f.write_all(media)?;
        f.flush()?;
        Ok(f)
    }
}

#[derive(Deserialize)]
struct ProbeDoc {
    #[serde(default)]
    streams: Vec<ProbeStream>,
    format: Option<ProbeFormat>,
}

#[derive(Deserialize)]
struct ProbeStream {
    width: Option<u32>,
    height: Option<u32>,
    avg_frame_rate: Option<String>,
    r_frame_rate: Option<String>,
    duration: Option<String>,
}

#[derive(Deserialize)]
struct ProbeFormat {
    duration: Option<String>,
}

fn parse_rate(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((n, d)) => {
            let (n, d): (f64, f64) = (n.parse().ok()?, d.parse().ok()?);
            (d != 0.0 && n > 0.0).then(|| n / d)
        }
        None => s.parse().ok().filter(|v: &f64| *v > 0.0),
    }
}

/// Parses `ffprobe -of json -show_streams -show_format` output.
pub fn parse_ffprobe_json(doc: &[u8]) -> Result<ClipInfo, MediaError> {
    let doc: ProbeDoc =
        serde_json::from_slice(doc).map_err(|e| MediaError::Decode(format!("ffprobe output: {e}")))?;
    let stream = doc
        .streams
        .into_iter()
        .find(|s| s.width.is_some() && s.height.is_some())
        .ok_or_else(|| MediaError::Unsupported("no video stream".into()))?;
    let fps = stream
        .avg_frame_rate
        .as_deref()
        .and_then(parse_rate)
        .or_else(|| stream.r_frame_rate.as_deref().and_then(parse_rate))
        .ok_or_else(|| MediaError::Decode("no usable frame rate".into()))?;
    let duration = stream
        .duration
        .as_deref()
        .and_then(|d| d.parse::<f64>().ok())
        .or_else(|| doc.format.and_then(|f| f.duration).and_then(|d| d.parse().ok()))
        .filter(|d| *d > 0.0)
        .ok_or_else(|| MediaError::Decode("no usable duration".into()))?;
    Ok(ClipInfo {
        duration,
        fps,
        width: stream.width.unwrap_or(0),
        height: stream.height.unwrap_or(0),
    })
}

impl VideoDecoder for FfmpegDecoder {
    fn accepts(&self, media: &[u8]) -> bool {
        !media.is_empty()
    }

    fn probe(&self, media: &[u8]) -> Result<ClipInfo, MediaError> {
        let f = Self::spill(media)?;
        let out = self.run(
            &self.ffprobe,
            &[
                "-v".as_ref(),
                "error".as_ref(),
                "-select_streams".as_ref(),
                "v:0".as_ref(),
                "-show_streams".as_ref(),
                "-show_format".as_ref(),
                "-of".as_ref(),
                "json".as_ref(),
                f.path().as_os_str(),
            ],
        )?;
        parse_ffprobe_json(&out)
    }

    fn frames_at(&self, media: &[u8], timestamps: &[f64]) -> Result<Vec<Frame>, MediaError> {
        let f = Self::spill(media)?;
        timestamps
            .iter()
            .map(|&t| {
                let ts = format!("{t:.6}");
                let png = self.run(
                    &self.ffmpeg,
                    &[
                        "-v".as_ref(),
                        "error".as_ref(),
                        "-i".as_ref(),
                        f.path().as_os_str(),
                        "-ss".as_ref(),
                        ts.as_ref(),
                        "-frames:v".as_ref(),
                        "1".as_ref(),
                        "-f".as_ref(),
                        "image2pipe".as_ref(),
                        "-vcodec".as_ref(),
                        "png".as_ref(),
                        "-".as_ref(),
                    ],
                )?;
                if png.is_empty() {
                    return Err(MediaError::Decode(format!("no frame decoded at {ts}s")));
                }
                Ok(Frame::new(t, Image::decode(&png)?))
            })
            .collect()
    }
}
