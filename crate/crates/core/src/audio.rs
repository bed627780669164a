//! RIFF/WAVE decoding into normalized mono clips.
//!
//! Only 16-bit PCM at 16 kHz with one or two channels is accepted. Stereo is
//! down-mixed by averaging, and anything past [`MAX_DURATION_SECS`] is
//! dropped.

use thiserror::Error;

use crate::real::Real;

/// Sample rate every clip is delivered at.
pub const SAMPLE_RATE: u32 = 16_000;

/// Capture cap in seconds; longer recordings are truncated.
pub const MAX_DURATION_SECS: u32 = 10;

/// Maximum number of samples a clip may hold.
pub const MAX_SAMPLES: usize = (SAMPLE_RATE * MAX_DURATION_SECS) as usize;

const PCM_DIVISOR: f64 = 32768.0;
const FORMAT_PCM: u16 = 0x0001;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AudioError {
    #[error("malformed container: {0}")]
    MalformedContainer(String),
    #[error("unsupported sample rate {0} Hz (expected 16000)")]
    UnsupportedRate(u32),
    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),
    #[error("audio contains no samples")]
    EmptyAudio,
}

/// Decoded mono speech segment.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T = f64> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> AudioClip<T> {
    /// Builds a 16 kHz clip from raw samples.
    ///
    /// Samples are clamped to `[-1, 1]` and truncated to the 10 s cap.
    pub fn from_samples(mut samples: Vec<T>) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::EmptyAudio);
        }
        samples.truncate(MAX_SAMPLES);
        let one = T::one();
        for s in samples.iter_mut() {
            if !s.is_finite() {
                *s = T::zero();
            }
            *s = s.max(-one).min(one);
        }
        Ok(Self {
            samples,
            sample_rate: SAMPLE_RATE,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> T {
        T::from_usize_lossy(self.samples.len()) / T::lit(f64::from(self.sample_rate))
    }

    /// Returns a copy with every sample multiplied by `gain` (then clamped).
    pub fn scaled(&self, gain: T) -> Self {
        Self::from_samples(self.samples.iter().map(|&s| s * gain).collect())
            .expect("non-empty clip stays non-empty")
    }
}

struct FormatChunk {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
    sub_format: Option<u16>,
}

fn read_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<FormatChunk, AudioError> {
    if body.len() < 16 {
        return Err(AudioError::MalformedContainer("fmt chunk too short".into()));
    }
    let format_tag = read_u16(body, 0);
    let sub_format = if format_tag == FORMAT_EXTENSIBLE {
        if body.len() < 40 {
            return Err(AudioError::MalformedContainer(
                "extensible fmt chunk too short".into(),
            ));
        }
        // first two bytes of the SubFormat GUID carry the format tag
        Some(read_u16(body, 24))
    } else {
        None
    };
    Ok(FormatChunk {
        format_tag,
        channels: read_u16(body, 2),
        sample_rate: read_u32(body, 4),
        bits_per_sample: read_u16(body, 14),
        sub_format,
    })
}

/// Decodes a RIFF/WAVE file into a normalized 16 kHz mono clip.
pub fn decode_wav<T: Real>(bytes: &[u8]) -> Result<AudioClip<T>, AudioError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::MalformedContainer(
            "missing RIFF/WAVE header".into(),
        ));
    }

    let mut fmt: Option<FormatChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4) as usize;
        let start = pos + 8;
        // tolerate a data chunk whose declared size overruns the file
        let end = start.saturating_add(size).min(bytes.len());
        match id {
            b"fmt " => fmt = Some(parse_fmt(&bytes[start..end])?),
            b"data" => {
                data = Some(&bytes[start..end]);
            }
            _ => {}
        }
        if data.is_some() && fmt.is_some() {
            break;
        }
        pos = start.saturating_add(size).saturating_add(size & 1);
    }

    let fmt = fmt.ok_or_else(|| AudioError::MalformedContainer("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::MalformedContainer("no data chunk".into()))?;

    let is_pcm = fmt.format_tag == FORMAT_PCM
        || (fmt.format_tag == FORMAT_EXTENSIBLE && fmt.sub_format == Some(FORMAT_PCM));
    if !is_pcm {
        return Err(AudioError::UnsupportedEncoding(format!(
            "format tag {:#06x} is not PCM",
            fmt.sub_format.unwrap_or(fmt.format_tag)
        )));
    }
    if fmt.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedEncoding(format!(
            "{}-bit samples (expected 16)",
            fmt.bits_per_sample
        )));
    }
    if !(1..=2).contains(&fmt.channels) {
        return Err(AudioError::UnsupportedEncoding(format!(
            "{} channels (expected 1 or 2)",
            fmt.channels
        )));
    }
    if fmt.sample_rate != SAMPLE_RATE {
        return Err(AudioError::UnsupportedRate(fmt.sample_rate));
    }

    let channels = usize::from(fmt.channels);
    let frame_bytes = 2 * channels;
    let n_frames = (data.len() / frame_bytes).min(MAX_SAMPLES);
    if n_frames == 0 {
        return Err(AudioError::EmptyAudio);
    }
    let divisor = T::lit(PCM_DIVISOR * channels as f64);
    let samples = data
        .chunks_exact(frame_bytes)
        .take(n_frames)
        .map(|frame| {
            let sum: i32 = frame
                .chunks_exact(2)
                .map(|b| i32::from(i16::from_le_bytes([b[0], b[1]])))
                .sum();
            T::lit(f64::from(sum)) / divisor
        })
        .collect();
    AudioClip::from_samples(samples)
}

/// Encodes a clip as 16-bit mono PCM WAV at 16 kHz.
///
/// Samples are rounded to the nearest 1/32768 step and saturated at the
/// positive full-scale value 32767.
pub fn encode_wav<T: Real>(clip: &AudioClip<T>) -> Vec<u8> {
    let data_len = clip.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
    out.extend_from_slice(&(SAMPLE_RATE * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in clip.samples() {
        let v = (s.as_f64() * PCM_DIVISOR).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}
