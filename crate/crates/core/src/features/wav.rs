use std::io::{Cursor, Read, Seek};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, FeatureError};

fn map_hound(e: hound::Error) -> FeatureError {
    match e {
        hound::Error::Unsupported => FeatureError::UnsupportedEncoding("unsupported WAV variant".into()),
        hound::Error::IoError(io) => FeatureError::CorruptFile(io.to_string()),
        other => FeatureError::CorruptFile(other.to_string()),
    }
}

fn read_clip<R: Read>(mut reader: WavReader<R>) -> Result<AudioClip, FeatureError> {
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(FeatureError::CorruptFile("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 2f64.powi(i32::from(bits) - 1);
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
                .map_err(map_hound)?
        }
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(map_hound)?,
        (format, bits) => {
            return Err(FeatureError::UnsupportedEncoding(format!("{format:?} with {bits} bits")));
        }
    };
    if interleaved.len() % channels != 0 {
        return Err(FeatureError::CorruptFile("partial sample frame".into()));
    }
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(mono, spec.sample_rate).map_err(|e| FeatureError::CorruptFile(e.to_string()))
}

/// Decodes a WAV file at its native rate, mixing channels down by mean.
/// Integer samples are divided by 2^(bits-1).
pub fn load_wav_native(path: &Path) -> Result<AudioClip, FeatureError> {
    let reader = WavReader::open(path).map_err(map_hound)?;
    read_clip(reader)
}

/// Decodes a WAV file and resamples it to `target_sample_rate`.
pub fn load_wav(path: &Path, target_sample_rate: u32) -> Result<AudioClip, FeatureError> {
    Ok(load_wav_native(path)?.resampled(target_sample_rate))
}

/// Decodes an in-memory WAV image at its native rate.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip, FeatureError> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    read_clip(reader)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Float32,
}

fn write_clip<W: std::io::Write + Seek>(out: W, clip: &AudioClip, enc: WavEncoding) -> Result<(), FeatureError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate(),
        bits_per_sample: match enc {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match enc {
            WavEncoding::Pcm16 => SampleFormat::Int,
            WavEncoding::Float32 => SampleFormat::Float,
        },
    };
    let mut w = WavWriter::new(out, spec).map_err(map_hound)?;
    for &s in clip.samples() {
        match enc {
            WavEncoding::Pcm16 => w
                .write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
                .map_err(map_hound)?,
            WavEncoding::Float32 => w.write_sample(s as f32).map_err(map_hound)?,
        }
    }
    w.finalize().map_err(map_hound)
}

pub fn write_wav(path: &Path, clip: &AudioClip, enc: WavEncoding) -> Result<(), FeatureError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_clip(file, clip, enc)
}

pub fn encode_wav(clip: &AudioClip, enc: WavEncoding) -> Result<Vec<u8>, FeatureError> {
    let mut cursor = Cursor::new(Vec::new());
    write_clip(&mut cursor, clip, enc)?;
    Ok(cursor.into_inner())
}
