//! Frame sources: image directories, single images, and videos decoded
//! through `ffmpeg`/`ffprobe`.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdout, Command, Stdio};

use image::RgbImage;
use serde::Deserialize;

use crate::error::{Error, Result};

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

#[derive(Debug, Clone)]
pub struct SampledFrame {
    pub image: RgbImage,
    pub uri: String,
    /// Seconds into the video; `None` for still images.
    pub timestamp: Option<f64>,
}

pub fn is_image_path(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files directly inside `dir`, in lexicographic order.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && is_image_path(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

/// Target timestamps `0, 1/fps, 2/fps, …` up to and including `duration`.
pub fn sample_timestamps(duration: f64, fps: f64) -> Vec<f64> {
    if fps.is_nan() || fps <= 0.0 || duration.is_nan() || duration < 0.0 {
        return Vec::new();
    }
    let n = (duration * fps + 1e-9).floor() as usize + 1;
    (0..n).map(|i| i as f64 / fps).collect()
}

/// Index of the decoded frame nearest each timestamp for a stream at
/// `native_fps`; exact midpoints go to the earlier frame.
pub fn nearest_frame_indices(timestamps: &[f64], native_fps: f64) -> Vec<usize> {
    timestamps
        .iter()
        .map(|&t| (t * native_fps - 0.5).ceil().max(0.0) as usize)
        .collect()
}

/// Sampled frames of `source`, lazily decoded.
///
/// A directory yields every image in it (timestamps absent), a single image
/// file yields itself, anything else is treated as a video.
pub fn sample_frames(source: &Path, fps: f64) -> Result<Box<dyn Iterator<Item = Result<SampledFrame>>>> {
    if fps.is_nan() || fps <= 0.0 {
        return Err(Error::InvalidParams("fps must be positive".into()));
    }
    if !source.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} does not exist", source.display()),
        )));
    }
    let stills = if source.is_dir() {
        Some(list_images(source)?)
    } else if is_image_path(source) {
        Some(vec![source.to_path_buf()])
    } else {
        None
    };
    match stills {
        Some(paths) => Ok(Box::new(paths.into_iter().map(|p| {
            let image = image::open(&p)?.to_rgb8();
            Ok(SampledFrame {
                image,
                uri: p.display().to_string(),
                timestamp: None,
            })
        }))),
        None => Ok(Box::new(VideoFrames::open(source, fps)?)),
    }
}

#[derive(Debug, Deserialize)]
struct Probe {
    streams: Vec<ProbeStream>,
    format: Option<ProbeFormat>,
}

#[derive(Debug, Deserialize)]
struct ProbeStream {
    width: u32,
    height: u32,
    avg_frame_rate: Option<String>,
    r_frame_rate: Option<String>,
    duration: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ProbeFormat {
    duration: Option<String>,
}

fn parse_rate(r: &str) -> Option<f64> {
    let (n, d) = r.split_once('/').unwrap_or((r, "1"));
    let (n, d): (f64, f64) = (n.parse().ok()?, d.parse().ok()?);
    (d > 0.0 && n > 0.0).then(|| n / d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoInfo {
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub duration: f64,
}

pub fn probe_video(path: &Path) -> Result<VideoInfo> {
    let out = Command::new("ffprobe")
        .args(["-v", "error", "-select_streams", "v:0", "-show_entries"])
        .arg("stream=width,height,avg_frame_rate,r_frame_rate,duration:format=duration")
        .args(["-of", "json"])
        .arg(path)
        .output()
        .map_err(|e| Error::Video(format!("cannot run ffprobe: {e}")))?;
    if !out.status.success() {
        return Err(Error::Video(format!(
            "ffprobe failed on {}: {}",
            path.display(),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    parse_probe(&out.stdout)
}

fn parse_probe(json: &[u8]) -> Result<VideoInfo> {
    let probe: Probe = serde_json::from_slice(json).map_err(|e| Error::Video(format!("ffprobe output: {e}")))?;
    let s = probe
        .streams
        .first()
        .ok_or_else(|| Error::Video("no video stream".into()))?;
    let fps = s
        .avg_frame_rate
        .as_deref()
        .and_then(parse_rate)
        .or_else(|| s.r_frame_rate.as_deref().and_then(parse_rate))
        .ok_or_else(|| Error::Video("unknown frame rate".into()))?;
    let duration = s
        .duration
        .as_deref()
        .or(probe.format.as_ref().and_then(|f| f.duration.as_deref()))
        .and_then(|d| d.parse::<f64>().ok())
        .ok_or_else(|| Error::Video("unknown duration".into()))?;
    Ok(VideoInfo {
        width: s.width,
        height: s.height,
        fps,
        duration,
    })
}

/// Re-read one stored frame: a still image, or the video frame at `timestamp`.
pub fn load_frame(uri: &str, timestamp: Option<f64>) -> Result<RgbImage> {
    let path = Path::new(uri);
    let Some(t) = timestamp else {
        return Ok(image::open(path)?.to_rgb8());
    };
    let out = Command::new("ffmpeg")
        .args(["-v", "error", "-ss", &format!("{t:.6}"), "-i"])
        .arg(path)
        .args(["-frames:v", "1", "-f", "image2pipe", "-vcodec", "png", "-"])
        .output()
        .map_err(|e| Error::Video(format!("cannot run ffmpeg: {e}")))?;
    if !out.status.success() || out.stdout.is_empty() {
        return Err(Error::Video(format!("{uri}: no frame at {t}s")));
    }
    Ok(image::load_from_memory(&out.stdout)?.to_rgb8())
}

/// Streams raw RGB frames from an `ffmpeg` child, keeping the ones nearest
/// each target timestamp.
struct VideoFrames {
    uri: String,
    info: VideoInfo,
    child: Option<Child>,
    stdout: Option<ChildStdout>,
    /// (decoded frame index, target timestamp), ascending.
    targets: Vec<(usize, f64)>,
    next_target: usize,
    decoded: usize,
    last: Option<RgbImage>,
}

impl VideoFrames {
    fn open(path: &Path, fps: f64) -> Result<Self> {
        let info = probe_video(path)?;
        let stamps = sample_timestamps(info.duration, fps);
        let idx = nearest_frame_indices(&stamps, info.fps);
        let mut child = Command::new("ffmpeg")
            .args(["-v", "error", "-i"])
            .arg(path)
            .args(["-f", "rawvideo", "-pix_fmt", "rgb24", "-vsync", "passthrough", "-"])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Video(format!("cannot run ffmpeg: {e}")))?;
        let stdout = child.stdout.take();
        Ok(Self {
            uri: path.display().to_string(),
            info,
            child: Some(child),
            stdout,
            targets: idx.into_iter().zip(stamps).collect(),
            next_target: 0,
            decoded: 0,
            last: None,
        })
    }

    fn read_frame(&mut self) -> Result<Option<RgbImage>> {
        let Some(out) = self.stdout.as_mut() else {
            return Ok(None);
        };
        let mut buf = vec![0u8; self.info.width as usize * self.info.height as usize * 3];
        let mut filled = 0;
        while filled < buf.len() {
            let n = out.read(&mut buf[filled..])?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        if filled < buf.len() {
            self.stdout = None;
            if let Some(mut c) = self.child.take() {
                let _ = c.wait();
            }
            return Ok(None);
        }
        Ok(RgbImage::from_raw(self.info.width, self.info.height, buf))
    }

    fn emit(&mut self, image: RgbImage) -> SampledFrame {
        let (_, t) = self.targets[self.next_target];
        self.next_target += 1;
        SampledFrame {
            image,
            uri: self.uri.clone(),
            timestamp: Some(t),
        }
    }
}

impl Iterator for VideoFrames {
    type Item = Result<SampledFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let &(want, _) = self.targets.get(self.next_target)?;
        if let Some(last) = &self.last {
            // several targets can map to the same decoded frame
            if self.decoded > 0 && want < self.decoded {
                let img = last.clone();
                return Some(Ok(self.emit(img)));
            }
        }
        loop {
            match self.read_frame() {
                Ok(Some(img)) => {
                    self.decoded += 1;
                    self.last = Some(img);
                    if self.decoded - 1 == want {
                        let img = self.last.clone().unwrap();
                        return Some(Ok(self.emit(img)));
                    }
                }
                Ok(None) => {
                    // past the end of the stream: reuse the final frame
                    return match self.last.clone() {
                        Some(img) => Some(Ok(self.emit(img))),
                        None => {
                            self.next_target = self.targets.len();
                            Some(Err(Error::Video(format!("{}: no decodable frames", self.uri))))
                        }
                    };
                }
                Err(e) => {
                    self.next_target = self.targets.len();
                    return Some(Err(e));
                }
            }
        }
    }
}

impl Drop for VideoFrames {
    fn drop(&mut self) {
        if let Some(mut c) = self.child.take() {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}
