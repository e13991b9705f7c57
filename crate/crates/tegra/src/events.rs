//! Intensity-change event streams: generation from frame sequences,
//! binary-event conversion, sampling, and (de)serialization.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;
use crate::{fmt_f64, Error, Result};

/// One intensity-change event: pixel, absolute timestamp (seconds), and
/// intensity change rate (intensity units / second).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ICEvent {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub r: f64,
}

/// Conventional polarity event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinaryEvent {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub p: i8,
}

/// Events observed in the window [t, t + tau]; relative stamps
/// `u - t` lie in [0, tau].
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    pub t: f64,
    pub tau: f64,
    pub events: Vec<ICEvent>,
}

impl EventStream {
    pub fn new(t: f64, tau: f64, events: Vec<ICEvent>) -> Result<EventStream> {
        for e in &events {
            if !e.u.is_finite() || e.u < t - 1e-12 || e.u > t + tau + 1e-12 {
                return Err(Error::Data(format!(
                    "event timestamp {} outside window [{t}, {}]",
                    e.u,
                    t + tau
                )));
            }
        }
        Ok(EventStream { t, tau, events })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Timestamp of an event relative to the window start.
    pub fn relative(&self, e: &ICEvent) -> f64 {
        e.u - self.t
    }
}

/// Threshold-and-difference event generation for one frame pair: pixels
/// whose gray intensity changed by more than `delta` emit an event with
/// rate `(l1 - l0) / dt` stamped at the interval midpoint.
pub fn ic_from_frame_pair(
    l0: &Image,
    l1: &Image,
    t: f64,
    dt: f64,
    delta: f64,
) -> Result<Vec<ICEvent>> {
    if !l0.same_shape(l1) {
        return Err(Error::Shape(format!(
            "frame pair {}x{}x{} vs {}x{}x{}",
            l0.width(),
            l0.height(),
            l0.channels(),
            l1.width(),
            l1.height(),
            l1.channels()
        )));
    }
    if l0.channels() != 1 {
        return Err(Error::Shape("event generation expects gray frames".into()));
    }
    if !(dt > 0.0) || !(delta > 0.0) {
        return Err(Error::Config("require dt > 0 and delta > 0".into()));
    }
    let mut events = Vec::new();
    let u = t + dt / 2.0;
    let w = l0.width() as usize;
    for (i, (&a, &b)) in l0.data().iter().zip(l1.data().iter()).enumerate() {
        let diff = b - a;
        if diff.abs() > delta {
            events.push(ICEvent {
                x: (i % w) as f64,
                y: (i / w) as f64,
                u,
                r: diff / dt,
            });
        }
    }
    Ok(events)
}

/// Split a frame sequence into non-overlapping windows of `window` frames
/// (`window - 1` pair intervals each) and generate one event stream per
/// window. Trailing frames that do not fill a window are dropped.
pub fn ic_stream_from_frames(
    frames: &[Image],
    timestamps: &[f64],
    delta: f64,
    window: usize,
) -> Result<Vec<EventStream>> {
    if window < 2 {
        return Err(Error::Config("window must span at least 2 frames".into()));
    }
    if frames.len() < window {
        return Err(Error::Data(format!(
            "need at least {window} frames, got {}",
            frames.len()
        )));
    }
    if frames.len() != timestamps.len() {
        return Err(Error::Shape("one timestamp per frame required".into()));
    }
    if timestamps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Data("timestamps must be strictly increasing".into()));
    }
    let pairs_per_stream = window - 1;
    let n_streams = (frames.len() - 1) / pairs_per_stream;
    let mut streams = Vec::with_capacity(n_streams);
    for s in 0..n_streams {
        let start = s * pairs_per_stream;
        let t = timestamps[start];
        let tau = timestamps[start + pairs_per_stream] - t;
        let mut events = Vec::new();
        for p in 0..pairs_per_stream {
            let i = start + p;
            events.extend(ic_from_frame_pair(
                &frames[i],
                &frames[i + 1],
                timestamps[i],
                timestamps[i + 1] - timestamps[i],
                delta,
            )?);
        }
        streams.push(EventStream::new(t, tau, events)?);
    }
    Ok(streams)
}

/// Estimate IC-events from binary polarity events by linear fitting over
/// the latest two consecutive events on each pixel: rate `p2 * delta / dt`
/// at the second timestamp. Pixels with fewer than two events produce no
/// estimate; their count is returned alongside.
pub fn binary_to_ic(events: &[BinaryEvent], delta: f64) -> Result<(Vec<ICEvent>, usize)> {
    if !(delta > 0.0) {
        return Err(Error::Config("delta must be positive".into()));
    }
    use std::collections::HashMap;
    let mut per_pixel: HashMap<(u64, u64), Vec<&BinaryEvent>> = HashMap::new();
    for e in events {
        if e.p != 1 && e.p != -1 {
            return Err(Error::Data(format!("polarity must be +/-1, got {}", e.p)));
        }
        per_pixel
            .entry((e.x.to_bits(), e.y.to_bits()))
            .or_default()
            .push(e);
    }
    let mut out = Vec::new();
    let mut skipped = 0usize;
    let mut keys: Vec<_> = per_pixel.keys().copied().collect();
    keys.sort_unstable();
    for key in keys {
        let hist = &per_pixel[&key];
        if hist.len() < 2 {
            skipped += 1;
            continue;
        }
        let e1 = hist[hist.len() - 2];
        let e2 = hist[hist.len() - 1];
        if e2.u <= e1.u {
            return Err(Error::Data("per-pixel events must be time-sorted".into()));
        }
        out.push(ICEvent {
            x: e2.x,
            y: e2.y,
            u: e2.u,
            r: e2.p as f64 * delta / (e2.u - e1.u),
        });
    }
    Ok((out, skipped))
}

/// Uniform sample of `k` events without replacement (the whole stream when
/// `k >= len`), deterministic per seed.
pub fn sample_events(stream: &EventStream, k: usize, seed: u64) -> EventStream {
    assert!(k >= 1, "sample size must be >= 1");
    if k >= stream.events.len() {
        return stream.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // partial Fisher-Yates over an index vector
    let mut idx: Vec<usize> = (0..stream.events.len()).collect();
    for i in 0..k {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    let events = idx[..k].iter().map(|&i| stream.events[i]).collect();
    EventStream {
        t: stream.t,
        tau: stream.tau,
        events,
    }
}

/// Fraction of pixel-pair slots that produced an event:
/// mean events-per-stream / (H * W * (window - 1)).
pub fn stream_sparsity(streams: &[EventStream], n_pixels: usize, window: usize) -> f64 {
    if streams.is_empty() {
        return 0.0;
    }
    let mean_events =
        streams.iter().map(|s| s.len() as f64).sum::<f64>() / streams.len() as f64;
    mean_events / (n_pixels as f64 * (window - 1) as f64)
}

pub fn write_events_csv(path: &Path, events: &[ICEvent]) -> Result<()> {
    let mut buf = String::from("x,y,u,r\n");
    for e in events {
        buf.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(e.x),
            fmt_f64(e.y),
            fmt_f64(e.u),
            fmt_f64(e.r)
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(buf.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn read_events_csv(path: &Path) -> Result<Vec<ICEvent>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("x,y,u,r") => {}
        other => {
            return Err(Error::Data(format!(
                "{}: expected header x,y,u,r, got {other:?}",
                path.display()
            )))
        }
    }
    let mut events = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let vals = parse_floats(line, 4)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), ln + 2)))?;
        events.push(ICEvent {
            x: vals[0],
            y: vals[1],
            u: vals[2],
            r: vals[3],
        });
    }
    Ok(events)
}

pub fn write_binary_events_csv(path: &Path, events: &[BinaryEvent]) -> Result<()> {
    let mut buf = String::from("x,y,u,p\n");
    for e in events {
        buf.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(e.x),
            fmt_f64(e.y),
            fmt_f64(e.u),
            e.p
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(buf.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn read_binary_events_csv(path: &Path) -> Result<Vec<BinaryEvent>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("x,y,u,p") => {}
        other => {
            return Err(Error::Data(format!(
                "{}: expected header x,y,u,p, got {other:?}",
                path.display()
            )))
        }
    }
    let mut events = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Data(format!(
                "{}:{}: expected 4 fields",
                path.display(),
                ln + 2
            )));
        }
        let xyu = parse_floats(&fields[..3].join(","), 3)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), ln + 2)))?;
        let p: i8 = fields[3]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("{}:{}: bad polarity", path.display(), ln + 2)))?;
        events.push(BinaryEvent {
            x: xyu[0],
            y: xyu[1],
            u: xyu[2],
            p,
        });
    }
    Ok(events)
}

fn parse_floats(line: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let vals: std::result::Result<Vec<f64>, _> =
        line.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match vals {
        Ok(v) if v.len() == n => Ok(v),
        Ok(v) => Err(format!("expected {n} fields, got {}", v.len())),
        Err(e) => Err(format!("bad float: {e}")),
    }
}
