//! Screen observation: frame capture into a bounded ring, per-action video
//! clips, keyframe extraction, uniform sampling and downscaling.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clock::Tick;
use crate::geom::Rect;
use crate::io::{Backend, BackendError, InputEvent, ScreenSize};

pub const DEFAULT_FPS: f64 = 2.0;
pub const DEFAULT_RING_CAPACITY: usize = 600;
pub const DEFAULT_REFLECTION_FRAMES: usize = 8;
pub const DEFAULT_REFLECTION_WIDTH: u32 = 512;

#[derive(Debug, Error)]
pub enum ObservationError {
    #[error("frame source unavailable: {0}")]
    SourceUnavailable(String),
    #[error("invalid capture config: {0}")]
    InvalidConfig(String),
    #[error("no frames captured since the last action")]
    EmptyClip,
    #[error("region {region} outside {width}x{height} frame")]
    RegionOutOfBounds { region: Rect, width: u32, height: u32 },
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("invalid downscale target {target_w}x{target_h} for {width}x{height} frame")]
    InvalidTarget { target_w: u32, target_h: u32, width: u32, height: u32 },
    #[error("sample count must be at least 1")]
    InvalidSampleCount,
    #[error("frame timestamp {got} does not follow {last}")]
    NonMonotoneTimestamp { last: Tick, got: Tick },
    #[error("malformed clip manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One captured screenshot. Frames are immutable and cheap to clone.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub timestamp: Tick,
    pub image: Arc<RgbImage>,
}

impl Frame {
    pub fn new(index: u64, timestamp: Tick, image: RgbImage) -> Self {
        assert!(image.width() > 0 && image.height() > 0, "frame must have pixels");
        Self { index, timestamp, image: Arc::new(image) }
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn digest(&self) -> String {
        pixel_digest(&self.image)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ObservationError> {
        self.image.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path, index: u64, timestamp: Tick) -> Result<Frame, ObservationError> {
        let img = image::open(path)?.to_rgb8();
        Ok(Frame::new(index, timestamp, img))
    }
}

/// SHA-256 over the dimensions and raw RGB bytes, hex encoded. Independent
/// of any file encoding.
pub fn pixel_digest(img: &RgbImage) -> String {
    let mut h = Sha256::new();
    h.update(img.width().to_le_bytes());
    h.update(img.height().to_le_bytes());
    h.update(img.as_raw());
    hex::encode(h.finalize())
}

/// Anything that can produce a screenshot.
pub trait FrameSource {
    fn render(&self) -> Result<RgbImage, ObservationError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureConfig {
    pub fps: f64,
    pub ring_capacity: usize,
    /// Width of the low-resolution frames sent for reflection.
    pub reflection_width: u32,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self { fps: DEFAULT_FPS, ring_capacity: DEFAULT_RING_CAPACITY, reflection_width: DEFAULT_REFLECTION_WIDTH }
    }
}

impl CaptureConfig {
    pub fn validate(&self) -> Result<(), ObservationError> {
        if !(self.fps > 0.0 && self.fps <= 60.0) {
            return Err(ObservationError::InvalidConfig(format!("fps {} outside (0, 60]", self.fps)));
        }
        if self.ring_capacity == 0 {
            return Err(ObservationError::InvalidConfig("ring capacity must be positive".into()));
        }
        if self.reflection_width == 0 {
            return Err(ObservationError::InvalidConfig("reflection width must be positive".into()));
        }
        Ok(())
    }
}

/// Frames recorded while one action ran.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub frames: Vec<Frame>,
    pub fps: f64,
    pub action_marker_start: Tick,
    pub action_marker_end: Tick,
}

impl VideoClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn first(&self) -> Option<&Frame> {
        self.frames.first()
    }

    pub fn last(&self) -> Option<&Frame> {
        self.frames.last()
    }
}

#[derive(Debug)]
struct RingState {
    frames: VecDeque<Frame>,
    capacity: usize,
    next_index: u64,
    /// Index of the newest frame handed out in a clip, and the tick the clip ended.
    marker: Option<(u64, Tick)>,
    evicted: u64,
}

/// Bounded, internally synchronized frame buffer. Cloning shares the buffer.
#[derive(Debug, Clone)]
pub struct FrameRing {
    state: Arc<Mutex<RingState>>,
}

impl FrameRing {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring capacity must be positive");
        Self {
            state: Arc::new(Mutex::new(RingState {
                frames: VecDeque::with_capacity(capacity.min(4096)),
                capacity,
                next_index: 0,
                marker: None,
                evicted: 0,
            })),
        }
    }

    /// Appends a screenshot taken at `timestamp`, evicting the oldest frame
    /// when full. Returns the assigned frame.
    pub fn push(&self, timestamp: Tick, image: RgbImage) -> Result<Frame, ObservationError> {
        let mut st = self.state.lock().expect("frame ring poisoned");
        if let Some(last) = st.frames.back() {
            if timestamp <= last.timestamp {
                return Err(ObservationError::NonMonotoneTimestamp { last: last.timestamp, got: timestamp });
            }
        }
        let frame = Frame::new(st.next_index, timestamp, image);
        st.next_index += 1;
        if st.frames.len() == st.capacity {
            st.frames.pop_front();
            st.evicted += 1;
        }
        st.frames.push_back(frame.clone());
        Ok(frame)
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("frame ring poisoned").frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn evicted(&self) -> u64 {
        self.state.lock().expect("frame ring poisoned").evicted
    }

    pub fn latest(&self) -> Option<Frame> {
        self.state.lock().expect("frame ring poisoned").frames.back().cloned()
    }

    pub fn snapshot(&self) -> Vec<Frame> {
        self.state.lock().expect("frame ring poisoned").frames.iter().cloned().collect()
    }

    /// Frames captured since the previous call; advances the marker to `now`.
    pub fn clip_since_last_action(&self, now: Tick, fps: f64) -> Result<VideoClip, ObservationError> {
        let mut st = self.state.lock().expect("frame ring poisoned");
        let after = st.marker.map(|(i, _)| i);
        let frames: Vec<Frame> = st.frames.iter().filter(|f| after.map_or(true, |i| f.index > i)).cloned().collect();
        let Some(last) = frames.last() else {
            return Err(ObservationError::EmptyClip);
        };
        let start = st.marker.map_or(frames[0].timestamp, |(_, t)| t.min(frames[0].timestamp));
        let end = now.max(last.timestamp);
        st.marker = Some((last.index, end));
        Ok(VideoClip { frames, fps, action_marker_start: start, action_marker_end: end })
    }
}

/// Clock-driven capture: frames are taken every `1 / fps` seconds of
/// simulated time when [`Capture::poll`] is called.
#[derive(Debug)]
pub struct Capture {
    config: CaptureConfig,
    ring: FrameRing,
    tick_secs: f64,
    start: Tick,
    taken: u64,
    last_tick: Option<Tick>,
    running: bool,
}

/// Starts capturing from `source`. The source is probed once so a dead
/// screen is reported up front.
pub fn start_capture(
    source: &dyn FrameSource,
    config: CaptureConfig,
    start: Tick,
    tick_secs: f64,
) -> Result<Capture, ObservationError> {
    config.validate()?;
    source.render()?;
    Ok(Capture {
        ring: FrameRing::new(config.ring_capacity),
        config,
        tick_secs,
        start,
        taken: 0,
        last_tick: None,
        running: true,
    })
}

pub fn stop_capture(handle: &mut Capture) {
    handle.running = false;
}

impl Capture {
    pub fn ring(&self) -> &FrameRing {
        &self.ring
    }

    pub fn config(&self) -> &CaptureConfig {
        &self.config
    }

    pub fn is_running(&self) -> bool {
        self.running
    }

    fn due_tick(&self, k: u64) -> Tick {
        let secs = k as f64 / self.config.fps;
        self.start + (secs / self.tick_secs - 1e-9).ceil() as Tick
    }

    /// Captures every frame due at or before `now`. Returns how many were taken.
    pub fn poll(&mut self, now: Tick, source: &dyn FrameSource) -> Result<usize, ObservationError> {
        if !self.running {
            return Ok(0);
        }
        let mut n = 0;
        while self.due_tick(self.taken + 1) <= now {
            self.taken += 1;
            let due = self.due_tick(self.taken);
            if self.last_tick.is_some_and(|t| t >= due) {
                continue;
            }
            self.ring.push(due, source.render()?)?;
            self.last_tick = Some(due);
            n += 1;
        }
        Ok(n)
    }

    /// Takes a frame at `now` unless one was already taken at this tick.
    pub fn snapshot(&mut self, now: Tick, source: &dyn FrameSource) -> Result<Option<Frame>, ObservationError> {
        if self.last_tick.is_some_and(|t| t >= now) {
            return Ok(None);
        }
        let f = self.ring.push(now, source.render()?)?;
        self.last_tick = Some(now);
        Ok(Some(f))
    }

    pub fn clip_since_last_action(&self, now: Tick) -> Result<VideoClip, ObservationError> {
        self.ring.clip_since_last_action(now, self.config.fps)
    }
}

/// Background capture loop for real screens, writing into a shared ring.
pub struct CaptureThread {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    ring: FrameRing,
}

impl CaptureThread {
    pub fn spawn<S>(source: S, config: &CaptureConfig) -> Result<Self, ObservationError>
    where
        S: FrameSource + Send + 'static,
    {
        config.validate()?;
        source.render()?;
        let ring = FrameRing::new(config.ring_capacity);
        let stop = Arc::new(AtomicBool::new(false));
        let interval = Duration::from_secs_f64(1.0 / config.fps);
        let (ring2, stop2) = (ring.clone(), stop.clone());
        let handle = std::thread::spawn(move || {
            let origin = std::time::Instant::now();
            let mut k: u64 = 0;
            while !stop2.load(Ordering::Relaxed) {
                k += 1;
                if let Ok(img) = source.render() {
                    let _ = ring2.push(k, img);
                }
                let target = interval * k as u32;
                if let Some(rest) = target.checked_sub(origin.elapsed()) {
                    std::thread::sleep(rest);
                }
            }
        });
        Ok(Self { stop, handle: Some(handle), ring })
    }

    pub fn ring(&self) -> &FrameRing {
        &self.ring
    }

    pub fn stop(mut self) -> FrameRing {
        self.shutdown();
        self.ring.clone()
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for CaptureThread {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Backend adapter that lets the capture loop observe every simulated tick
/// while the executor drives the environment.
pub struct Observed<'a, E> {
    env: &'a mut E,
    capture: &'a mut Capture,
    last: Option<Tick>,
    error: Option<ObservationError>,
}

impl<'a, E: Backend + FrameSource> Observed<'a, E> {
    pub fn new(env: &'a mut E, capture: &'a mut Capture) -> Self {
        Self { env, capture, last: None, error: None }
    }

    pub fn env(&self) -> &E {
        self.env
    }

    pub fn capture(&mut self) -> &mut Capture {
        self.capture
    }

    /// First capture error hit while stepping, if any.
    pub fn take_error(&mut self) -> Option<ObservationError> {
        self.error.take()
    }

    fn step_to(&mut self, tick: Tick) -> Result<(), BackendError> {
        let from = self.last.map_or(tick, |l| l + 1);
        for t in from..=tick {
            self.env.sync(t)?;
            if let Err(e) = self.capture.poll(t, &*self.env) {
                self.error.get_or_insert(e);
            }
        }
        self.last = Some(self.last.map_or(tick, |l| l.max(tick)));
        Ok(())
    }
}

impl<E: Backend + FrameSource> Backend for Observed<'_, E> {
    fn send(&mut self, tick: Tick, event: &InputEvent) -> Result<(), BackendError> {
        self.step_to(tick)?;
        self.env.send(tick, event)
    }

    fn sync(&mut self, tick: Tick) -> Result<(), BackendError> {
        self.step_to(tick)
    }

    fn set_focus(&mut self, tick: Tick, focused: bool) -> Result<(), BackendError> {
        self.step_to(tick)?;
        self.env.set_focus(tick, focused)
    }

    fn screen(&self) -> ScreenSize {
        self.env.screen()
    }
}

/// Mean absolute per-channel difference inside `region`, as a fraction of
/// full scale.
pub fn region_difference(a: &RgbImage, b: &RgbImage, region: &Rect) -> f64 {
    let mut sum: u64 = 0;
    for y in region.y0..region.y1 {
        for x in region.x0..region.x1 {
            let (pa, pb) = (a.get_pixel(x, y).0, b.get_pixel(x, y).0);
            for c in 0..3 {
                sum += (pa[c] as i32 - pb[c] as i32).unsigned_abs() as u64;
            }
        }
    }
    sum as f64 / (3.0 * 255.0 * region.area() as f64)
}

/// Frames whose text region changed by more than `threshold` versus the
/// previously kept keyframe. The first frame is always kept.
pub fn extract_keyframes(clip: &VideoClip, region: &Rect, threshold: f64) -> Result<Vec<Frame>, ObservationError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ObservationError::InvalidThreshold(threshold));
    }
    let Some(first) = clip.frames.first() else {
        return Err(ObservationError::EmptyClip);
    };
    for f in &clip.frames {
        if !region.fits_in(f.width(), f.height()) {
            return Err(ObservationError::RegionOutOfBounds { region: *region, width: f.width(), height: f.height() });
        }
    }
    let mut kept = vec![first.clone()];
    for f in &clip.frames[1..] {
        let reference = kept.last().expect("non-empty");
        if region_difference(&reference.image, &f.image, region) > threshold {
            kept.push(f.clone());
        }
    }
    Ok(kept)
}

/// Indices picked by uniform sampling of `n` frames down to at most `max_n`:
/// `round(i * (n - 1) / (max_n - 1))` for `i` in `0..max_n`, deduplicated.
pub fn sample_indices(n: usize, max_n: usize) -> Vec<usize> {
    if n <= max_n {
        return (0..n).collect();
    }
    if max_n == 1 {
        return vec![0];
    }
    let den = max_n - 1;
    let mut out: Vec<usize> = (0..max_n).map(|i| (2 * i * (n - 1) + den) / (2 * den)).collect();
    out.dedup();
    out
}

pub fn sample_frames(clip: &VideoClip, max_n: usize) -> Result<Vec<Frame>, ObservationError> {
    if max_n == 0 {
        return Err(ObservationError::InvalidSampleCount);
    }
    if clip.frames.is_empty() {
        return Err(ObservationError::EmptyClip);
    }
    Ok(sample_indices(clip.frames.len(), max_n).into_iter().map(|i| clip.frames[i].clone()).collect())
}

/// Nearest-neighbour downscale into a `target` canvas, letterboxed in black
/// when the aspect ratios differ.
pub fn downscale(frame: &Frame, target_w: u32, target_h: u32) -> Result<Frame, ObservationError> {
    let (sw, sh) = (frame.width(), frame.height());
    if target_w == 0 || target_h == 0 || target_w > sw || target_h > sh {
        return Err(ObservationError::InvalidTarget { target_w, target_h, width: sw, height: sh });
    }
    if (target_w, target_h) == (sw, sh) {
        return Ok(frame.clone());
    }
    // Content size: the source scaled by min(tw/sw, th/sh), compared exactly
    // via cross-multiplication.
    let (cw, ch) = if target_w as u64 * sh as u64 <= target_h as u64 * sw as u64 {
        let ch = ((sh as u64 * target_w as u64 + sw as u64 / 2) / sw as u64).clamp(1, target_h as u64) as u32;
        (target_w, ch)
    } else {
        let cw = ((sw as u64 * target_h as u64 + sh as u64 / 2) / sh as u64).clamp(1, target_w as u64) as u32;
        (cw, target_h)
    };
    let (ox, oy) = ((target_w - cw) / 2, (target_h - ch) / 2);
    let mut out = RgbImage::from_pixel(target_w, target_h, Rgb([0, 0, 0]));
    for y in 0..ch {
        let sy = (y as u64 * sh as u64 / ch as u64) as u32;
        for x in 0..cw {
            let sx = (x as u64 * sw as u64 / cw as u64) as u32;
            out.put_pixel(ox + x, oy + y, *frame.image.get_pixel(sx, sy));
        }
    }
    Ok(Frame { index: frame.index, timestamp: frame.timestamp, image: Arc::new(out) })
}

/// Target size for reflection frames: `width` wide with the source aspect,
/// or the source size if it is already narrower.
pub fn reflection_size(width: u32, height: u32, target_width: u32) -> (u32, u32) {
    if width <= target_width {
        return (width, height);
    }
    let h = ((height as u64 * target_width as u64 + width as u64 / 2) / width as u64).max(1) as u32;
    (target_width, h.min(height))
}

const MANIFEST: &str = "manifest.txt";

/// Writes a clip as `frame_<index>.png` files plus a line-oriented manifest.
pub fn save_clip(clip: &VideoClip, dir: &Path) -> Result<(), ObservationError> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("clip v1\n");
    manifest.push_str(&format!("fps {}\n", clip.fps));
    manifest.push_str(&format!("start {}\n", clip.action_marker_start));
    manifest.push_str(&format!("end {}\n", clip.action_marker_end));
    for f in &clip.frames {
        let name = format!("frame_{}.png", f.index);
        f.save_png(&dir.join(&name))?;
        manifest.push_str(&format!("frame {} {} {}\n", f.index, f.timestamp, name));
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    Ok(())
}

pub fn load_clip(dir: &Path) -> Result<VideoClip, ObservationError> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let mut lines = text.lines();
    if lines.next() != Some("clip v1") {
        return Err(ObservationError::Manifest("missing `clip v1` header".into()));
    }
    let bad = |l: &str| ObservationError::Manifest(format!("bad line `{l}`"));
    let (mut fps, mut start, mut end) = (None, None, None);
    let mut frames = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["fps", v] => fps = Some(v.parse::<f64>().map_err(|_| bad(line))?),
            ["start", v] => start = Some(v.parse::<Tick>().map_err(|_| bad(line))?),
            ["end", v] => end = Some(v.parse::<Tick>().map_err(|_| bad(line))?),
            ["frame", idx, ts, file] => {
                let idx = idx.parse().map_err(|_| bad(line))?;
                let ts = ts.parse().map_err(|_| bad(line))?;
                let path: PathBuf = dir.join(file);
                frames.push(Frame::load_png(&path, idx, ts)?);
            }
            _ => return Err(bad(line)),
        }
    }
    let missing = |k: &str| ObservationError::Manifest(format!("missing `{k}`"));
    if frames.is_empty() {
        return Err(ObservationError::EmptyClip);
    }
    Ok(VideoClip {
        frames,
        fps: fps.ok_or_else(|| missing("fps"))?,
        action_marker_start: start.ok_or_else(|| missing("start"))?,
        action_marker_end: end.ok_or_else(|| missing("end"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    struct Counter(Cell<u8>);

    impl FrameSource for Counter {
        fn render(&self) -> Result<RgbImage, ObservationError> {
            let v = self.0.get();
            self.0.set(v.wrapping_add(1));
            Ok(RgbImage::from_pixel(4, 4, Rgb([v, v, v])))
        }
    }

    struct Dead;

    impl FrameSource for Dead {
        fn render(&self) -> Result<RgbImage, ObservationError> {
            Err(ObservationError::SourceUnavailable("no display".into()))
        }
    }

    fn solid(w: u32, h: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([v, v, v]))
    }

    fn clip_of(images: Vec<RgbImage>) -> VideoClip {
        let frames = images.into_iter().enumerate().map(|(i, img)| Frame::new(i as u64, i as Tick + 1, img)).collect();
        VideoClip { frames, fps: 2.0, action_marker_start: 0, action_marker_end: 100 }
    }

    #[test]
    fn ten_ticks_at_two_fps_yield_ten_frames() {
        // 0.5 s ticks at 2 fps: exactly one frame is due per tick.
        let src = Counter(Cell::new(0));
        let mut cap = start_capture(&src, CaptureConfig::default(), 0, 0.5).unwrap();
        for t in 1..=10 {
            cap.poll(t, &src).unwrap();
        }
        assert_eq!(cap.ring().len(), 10);
        let ts: Vec<Tick> = cap.ring().snapshot().iter().map(|f| f.timestamp).collect();
        assert_eq!(ts, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn polling_late_catches_up() {
        let src = Counter(Cell::new(0));
        let mut cap = start_capture(&src, CaptureConfig::default(), 0, 0.05).unwrap();
        assert_eq!(cap.poll(35, &src).unwrap(), 3);
        let ts: Vec<Tick> = cap.ring().snapshot().iter().map(|f| f.timestamp).collect();
        assert_eq!(ts, vec![10, 20, 30]);
    }

    #[test]
    fn fps_validation() {
        let src = Counter(Cell::new(0));
        for fps in [0.0, -1.0, 61.0, f64::NAN] {
            let cfg = CaptureConfig { fps, ..Default::default() };
            assert!(matches!(start_capture(&src, cfg, 0, 0.5), Err(ObservationError::InvalidConfig(_))));
        }
        assert!(matches!(start_capture(&Dead, CaptureConfig::default(), 0, 0.5), Err(ObservationError::SourceUnavailable(_))));
    }

    #[test]
    fn stopped_capture_takes_nothing() {
        let src = Counter(Cell::new(0));
        let mut cap = start_capture(&src, CaptureConfig::default(), 0, 0.5).unwrap();
        stop_capture(&mut cap);
        assert_eq!(cap.poll(10, &src).unwrap(), 0);
    }

    #[test]
    fn ring_evicts_oldest() {
        let ring = FrameRing::new(5);
        for t in 1..=8 {
            ring.push(t, solid(2, 2, t as u8)).unwrap();
        }
        let idx: Vec<u64> = ring.snapshot().iter().map(|f| f.index).collect();
        assert_eq!(idx, vec![3, 4, 5, 6, 7]);
        assert_eq!(ring.evicted(), 3);
        assert!(matches!(ring.push(8, solid(2, 2, 0)), Err(ObservationError::NonMonotoneTimestamp { .. })));
    }

    #[test]
    fn clip_marker_semantics() {
        let ring = FrameRing::new(100);
        assert!(matches!(ring.clip_since_last_action(0, 2.0), Err(ObservationError::EmptyClip)));
        for t in 1..=4 {
            ring.push(t, solid(2, 2, 0)).unwrap();
        }
        let clip = ring.clip_since_last_action(5, 2.0).unwrap();
        assert_eq!(clip.len(), 4);
        assert_eq!(clip.action_marker_end, 5);
        assert!(matches!(ring.clip_since_last_action(6, 2.0), Err(ObservationError::EmptyClip)));
        ring.push(7, solid(2, 2, 0)).unwrap();
        ring.push(8, solid(2, 2, 0)).unwrap();
        let clip = ring.clip_since_last_action(9, 2.0).unwrap();
        let idx: Vec<u64> = clip.frames.iter().map(|f| f.index).collect();
        assert_eq!(idx, vec![4, 5]);
        assert_eq!(clip.action_marker_start, 5);
        for f in &clip.frames {
            assert!(f.timestamp >= clip.action_marker_start && f.timestamp <= clip.action_marker_end);
        }
    }

    #[test]
    fn identical_frames_one_keyframe() {
        let clip = clip_of(vec![solid(8, 8, 10); 6]);
        let kf = extract_keyframes(&clip, &Rect::full(8, 8), 0.01).unwrap();
        assert_eq!(kf.len(), 1);
        assert_eq!(kf[0].index, 0);
    }

    #[test]
    fn subtitle_change_detected_against_brute_force() {
        // Frames 0..10; the subtitle band (rows 6..8) changes only at frame 5.
        // Pixels outside the band change every frame and must be ignored.
        let images: Vec<RgbImage> = (0..10u8)
            .map(|i| {
                let mut img = solid(16, 8, i * 20);
                let sub = if i < 5 { 0 } else { 255 };
                for y in 6..8 {
                    for x in 0..16 {
                        img.put_pixel(x, y, Rgb([sub, sub, sub]));
                    }
                }
                img
            })
            .collect();
        let clip = clip_of(images.clone());
        let region = Rect::new(0, 6, 16, 8);
        let got: Vec<u64> = extract_keyframes(&clip, &region, 0.1).unwrap().iter().map(|f| f.index).collect();

        // Oracle: walk the frames comparing raw bytes of the band directly.
        let band = |img: &RgbImage| -> Vec<u8> { (6..8).flat_map(|y| (0..16).flat_map(move |x| img.get_pixel(x, y).0)).collect() };
        let mut oracle = vec![0u64];
        let mut reference = band(&images[0]);
        for (i, img) in images.iter().enumerate().skip(1) {
            let b = band(img);
            let diff: u64 = b.iter().zip(&reference).map(|(a, r)| (*a as i64 - *r as i64).unsigned_abs()).sum();
            if diff as f64 / (255.0 * b.len() as f64) > 0.1 {
                oracle.push(i as u64);
                reference = b;
            }
        }
        assert_eq!(oracle, vec![0, 5]);
        assert_eq!(got, oracle);
    }

    #[test]
    fn noise_below_high_threshold() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let images: Vec<RgbImage> = (0..12)
            .map(|_| RgbImage::from_fn(16, 16, |_, _| Rgb([rng.gen_range(100..120), 110, 110])))
            .collect();
        let kf = extract_keyframes(&clip_of(images), &Rect::full(16, 16), 0.999).unwrap();
        assert_eq!(kf.len(), 1);
    }

    #[test]
    fn keyframe_argument_errors() {
        let clip = clip_of(vec![solid(8, 8, 0)]);
        assert!(matches!(extract_keyframes(&clip, &Rect::new(0, 0, 9, 8), 0.5), Err(ObservationError::RegionOutOfBounds { .. })));
        assert!(matches!(extract_keyframes(&clip, &Rect::full(8, 8), 1.0), Err(ObservationError::InvalidThreshold(_))));
        assert!(matches!(extract_keyframes(&clip, &Rect::full(8, 8), 0.0), Err(ObservationError::InvalidThreshold(_))));
    }

    #[test]
    fn sampling_examples() {
        assert_eq!(sample_indices(3, 8), vec![0, 1, 2]);
        assert_eq!(sample_indices(8, 8), (0..8).collect::<Vec<_>>());
        assert_eq!(sample_indices(20, 8), vec![0, 3, 5, 8, 11, 14, 16, 19]);
        assert_eq!(sample_indices(20, 2), vec![0, 19]);
        assert_eq!(sample_indices(20, 1), vec![0]);
        let clip = clip_of(vec![solid(2, 2, 0); 4]);
        assert!(matches!(sample_frames(&clip, 0), Err(ObservationError::InvalidSampleCount)));
        assert_eq!(sample_frames(&clip, 2).unwrap().len(), 2);
    }

    #[test]
    fn downscale_identity_and_checkerboard() {
        let checker = RgbImage::from_fn(4, 4, |x, y| if (x + y) % 2 == 0 { Rgb([255, 255, 255]) } else { Rgb([0, 0, 0]) });
        let f = Frame::new(0, 1, checker.clone());
        assert_eq!(*downscale(&f, 4, 4).unwrap().image, checker);
        let small = downscale(&f, 2, 2).unwrap();
        // Nearest neighbour picks source (2x, 2y): the top-left of each block.
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(small.image.get_pixel(x, y), checker.get_pixel(2 * x, 2 * y));
            }
        }
        assert!(matches!(downscale(&f, 5, 4), Err(ObservationError::InvalidTarget { .. })));
    }

    #[test]
    fn downscale_hd_keeps_ratio_without_letterbox() {
        let f = Frame::new(0, 1, RgbImage::from_pixel(1920, 1080, Rgb([200, 10, 10])));
        assert_eq!(reflection_size(1920, 1080, 512), (512, 288));
        let small = downscale(&f, 512, 288).unwrap();
        assert_eq!((small.width(), small.height()), (512, 288));
        assert!(small.image.pixels().all(|p| *p == Rgb([200, 10, 10])));
    }

    #[test]
    fn downscale_letterboxes() {
        let f = Frame::new(0, 1, RgbImage::from_pixel(40, 20, Rgb([9, 9, 9])));
        let out = downscale(&f, 20, 20).unwrap();
        // 40x20 into 20x20 -> 20x10 content centred vertically.
        assert_eq!(*out.image.get_pixel(0, 0), Rgb([0, 0, 0]));
        assert_eq!(*out.image.get_pixel(0, 5), Rgb([9, 9, 9]));
        assert_eq!(*out.image.get_pixel(0, 14), Rgb([9, 9, 9]));
        assert_eq!(*out.image.get_pixel(0, 15), Rgb([0, 0, 0]));
    }

    #[test]
    fn clip_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let clip = clip_of(vec![solid(3, 2, 1), solid(3, 2, 2)]);
        save_clip(&clip, dir.path()).unwrap();
        assert_eq!(load_clip(dir.path()).unwrap(), clip);
    }

    #[test]
    fn capture_thread_collects_frames() {
        struct Gray;
        impl FrameSource for Gray {
            fn render(&self) -> Result<RgbImage, ObservationError> {
                Ok(solid(2, 2, 5))
            }
        }
        let t = CaptureThread::spawn(Gray, &CaptureConfig { fps: 60.0, ring_capacity: 10, ..Default::default() }).unwrap();
        std::thread::sleep(Duration::from_millis(100));
        let ring = t.stop();
        assert!(!ring.is_empty());
        assert!(ring.len() <= 10);
    }
}
