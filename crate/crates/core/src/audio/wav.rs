//! Minimal RIFF/WAVE reader and writer.
//!
//! Reads PCM 16-bit and IEEE float 32-bit data, mono or stereo. Stereo is
//! downmixed by taking the mean of the two channels.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleEncoding {
    Pcm16,
    Float32,
}

#[derive(Debug, Clone, Copy)]
struct FmtChunk {
    encoding: SampleEncoding,
    channels: u16,
    sample_rate: u32,
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_wav(&bytes, source_id)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes an in-memory WAV file.
pub fn decode_wav(bytes: &[u8], source_id: impl Into<String>) -> Result<AudioClip> {
    if bytes.len() < 12 {
        return Err(Error::format(
            "RIFF",
            "file shorter than the 12-byte RIFF header",
        ));
    }
    if &bytes[0..4] != b"RIFF" {
        return Err(Error::format("RIFF", "missing RIFF magic"));
    }
    if &bytes[8..12] != b"WAVE" {
        return Err(Error::format("RIFF", "form type is not WAVE"));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let name = String::from_utf8_lossy(id).into_owned();
        let body_end = body_start.checked_add(size).filter(|&e| e <= bytes.len());
        match id {
            b"fmt " => {
                let end =
                    body_end.ok_or_else(|| Error::format("fmt ", "chunk runs past end of file"))?;
                fmt = Some(parse_fmt(&bytes[body_start..end])?);
            }
            b"data" => {
                // Some writers leave the data size unset when streaming; take what's there.
                let end = body_end.unwrap_or(bytes.len());
                data = Some(&bytes[body_start..end]);
            }
            _ => {
                if body_end.is_none() {
                    return Err(Error::format(&name, "chunk runs past end of file"));
                }
            }
        }
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }

    let fmt = fmt.ok_or_else(|| Error::format("fmt ", "no fmt chunk before end of file"))?;
    let data = data.ok_or_else(|| Error::format("data", "no data chunk in file"))?;

    let bytes_per_sample = match fmt.encoding {
        SampleEncoding::Pcm16 => 2,
        SampleEncoding::Float32 => 4,
    };
    let frame = bytes_per_sample * fmt.channels as usize;
    let n_frames = data.len() / frame;
    if n_frames == 0 {
        return Err(Error::format(
            "data",
            "chunk holds no complete sample frames",
        ));
    }

    let mut samples = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let mut acc = 0.0f32;
        for ch in 0..fmt.channels as usize {
            let at = f * frame + ch * bytes_per_sample;
            let v = match fmt.encoding {
                SampleEncoding::Pcm16 => {
                    i16::from_le_bytes([data[at], data[at + 1]]) as f32 / 32768.0
                }
                SampleEncoding::Float32 => {
                    let v =
                        f32::from_le_bytes([data[at], data[at + 1], data[at + 2], data[at + 3]]);
                    if !v.is_finite() {
                        return Err(Error::format(
                            "data",
                            format!("non-finite sample at frame {f}"),
                        ));
                    }
                    v.clamp(-1.0, 1.0)
                }
            };
            acc += v;
        }
        samples.push(if fmt.channels == 2 { acc * 0.5 } else { acc });
    }

    Ok(AudioClip {
        samples,
        sample_rate: fmt.sample_rate,
        source_id: source_id.into(),
    })
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::format(
            "fmt ",
            format!("chunk is {} bytes, need at least 16", body.len()),
        ));
    }
    let mut tag = u16_at(body, 0);
    let channels = u16_at(body, 2);
    let sample_rate = u32_at(body, 4);
    let bits = u16_at(body, 14);
    if tag == FORMAT_EXTENSIBLE {
        if body.len() < 26 {
            return Err(Error::format(
                "fmt ",
                "extensible format without sub-format GUID",
            ));
        }
        tag = u16_at(body, 24);
    }
    if sample_rate == 0 {
        return Err(Error::format("fmt ", "sample rate is zero"));
    }
    let encoding = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleEncoding::Pcm16,
        (FORMAT_FLOAT, 32) => SampleEncoding::Float32,
        (t, b) => {
            return Err(Error::UnsupportedFormat {
                found: format!("format tag {t}, {b} bits per sample"),
            })
        }
    };
    if channels != 1 && channels != 2 {
        return Err(Error::UnsupportedFormat {
            found: format!("{channels} channels"),
        });
    }
    Ok(FmtChunk {
        encoding,
        channels,
        sample_rate,
    })
}

/// Encodes a mono clip as a WAV byte buffer.
pub fn encode_wav(clip: &AudioClip, encoding: SampleEncoding) -> Vec<u8> {
    let (tag, bits, bps) = match encoding {
        SampleEncoding::Pcm16 => (FORMAT_PCM, 16u16, 2usize),
        SampleEncoding::Float32 => (FORMAT_FLOAT, 32u16, 4usize),
    };
    let data_len = clip.samples.len() * bps;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * bps as u32).to_le_bytes());
    out.extend_from_slice(&(bps as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        match encoding {
            SampleEncoding::Pcm16 => {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            SampleEncoding::Float32 => out.extend_from_slice(&s.to_le_bytes()),
        }
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip, encoding: SampleEncoding) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_wav(clip, encoding))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_wav(tag: u16, channels: u16, bits: u16, rate: u32, data: &[u8]) -> Vec<u8> {
        let block = channels * bits / 8;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&((36 + data.len()) as u32).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * block as u32).to_le_bytes());
        out.extend_from_slice(&block.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn zero_second_of_pcm16() {
        let data = vec![0u8; 32000];
        let clip = decode_wav(&raw_wav(1, 1, 16, 16000, &data), "z").unwrap();
        assert_eq!(clip.samples.len(), 16000);
        assert_eq!(clip.sample_rate, 16000);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn pcm16_full_scale() {
        let data = 32767i16.to_le_bytes();
        let clip = decode_wav(&raw_wav(1, 1, 16, 8000, &data), "x").unwrap();
        assert_eq!(clip.samples[0], 32767.0 / 32768.0);
    }

    #[test]
    fn stereo_downmix_cancels() {
        let mut data = Vec::new();
        for _ in 0..100 {
            data.extend_from_slice(&0.5f32.to_le_bytes());
            data.extend_from_slice(&(-0.5f32).to_le_bytes());
        }
        let clip = decode_wav(&raw_wav(3, 2, 32, 16000, &data), "s").unwrap();
        assert_eq!(clip.samples.len(), 100);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn unsupported_encoding_lists_supported() {
        let err = decode_wav(&raw_wav(1, 1, 24, 16000, &[0; 6]), "u").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::UnsupportedFormat { .. }));
        assert!(msg.contains("PCM 16-bit") && msg.contains("float 32-bit"));
    }

    #[test]
    fn malformed_header_names_chunk() {
        let mut bytes = raw_wav(1, 1, 16, 16000, &[0; 4]);
        bytes[8..12].copy_from_slice(b"AVI ");
        let err = decode_wav(&bytes, "m").unwrap_err();
        assert!(err.to_string().contains("RIFF"));

        let mut short_fmt = raw_wav(1, 1, 16, 16000, &[0; 4]);
        short_fmt[16..20].copy_from_slice(&8u32.to_le_bytes());
        let err = decode_wav(&short_fmt, "m").unwrap_err();
        assert!(err.to_string().contains("fmt"));
    }

    #[test]
    fn encode_decode_float_is_exact() {
        let clip = AudioClip {
            samples: vec![0.25, -0.125, 0.999, -1.0],
            sample_rate: 22050,
            source_id: "r".into(),
        };
        let back = decode_wav(&encode_wav(&clip, SampleEncoding::Float32), "r").unwrap();
        assert_eq!(back.samples, clip.samples);
        assert_eq!(back.sample_rate, 22050);
    }
}
