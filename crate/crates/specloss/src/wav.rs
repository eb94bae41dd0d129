//! Strict PCM16 mono WAV reading, writing, and corpus traversal.
//!
//! Only the format the rest of the crate consumes is accepted: RIFF/WAVE
//! containers holding 16-bit PCM mono audio. Unknown chunks are skipped;
//! anything structurally wrong or in another format is a distinct error
//! rather than a best-effort decode.

use std::fs;
use std::path::{Path, PathBuf};

use crate::dsp::Waveform;
use crate::{Error, Result};

/// Divisor mapping int16 payload values onto [-1, 1).
const SCALE: f64 = 32768.0;

/// A decoded WAV file. The container is always 16-bit PCM mono, so only
/// the waveform varies.
#[derive(Debug, Clone)]
pub struct WavFile {
    waveform: Waveform,
}

impl WavFile {
    /// The decoded samples, each an int16 value divided by 32768.
    pub fn waveform(&self) -> &Waveform {
        &self.waveform
    }

    /// Consumes the file, keeping the samples.
    pub fn into_waveform(self) -> Waveform {
        self.waveform
    }

    /// Bits per encoded sample; fixed by the accepted format.
    pub fn bit_depth(&self) -> u16 {
        16
    }

    /// Channel count; fixed by the accepted format.
    pub fn channels(&self) -> u16 {
        1
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(slice)
            }
            None => Err(Error::MalformedWav(format!(
                "{what} extends past the end of the file"
            ))),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn is_empty(&self) -> bool {
        self.pos >= self.bytes.len()
    }
}

struct FmtChunk {
    sample_rate: u32,
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk> {
    if body.len() < 16 {
        return Err(Error::MalformedWav(format!(
            "fmt chunk holds {} bytes, at least 16 required",
            body.len()
        )));
    }
    let mut r = Reader::new(body);
    let format = r.u16("fmt format code")?;
    let channels = r.u16("fmt channel count")?;
    let sample_rate = r.u32("fmt sample rate")?;
    let byte_rate = r.u32("fmt byte rate")?;
    let block_align = r.u16("fmt block align")?;
    let bits = r.u16("fmt bit depth")?;
    if format != 1 {
        return Err(Error::UnsupportedFormat(format));
    }
    if channels != 1 {
        return Err(Error::UnsupportedChannels(channels));
    }
    if bits != 16 {
        return Err(Error::UnsupportedBitDepth(bits));
    }
    if sample_rate == 0 {
        return Err(Error::MalformedWav("fmt sample rate is zero".to_string()));
    }
    if block_align != 2 {
        return Err(Error::MalformedWav(format!(
            "fmt block align {block_align} does not match mono 16-bit frames"
        )));
    }
    if byte_rate != sample_rate * 2 {
        return Err(Error::MalformedWav(format!(
            "fmt byte rate {byte_rate} does not match sample rate {sample_rate}"
        )));
    }
    Ok(FmtChunk { sample_rate })
}

fn parse_wav(bytes: &[u8]) -> Result<Waveform> {
    let mut r = Reader::new(bytes);
    if r.take(4, "RIFF magic")? != b"RIFF" {
        return Err(Error::MalformedWav("missing RIFF magic".to_string()));
    }
    let riff_size = r.u32("RIFF size")? as usize;
    if riff_size != bytes.len().saturating_sub(8) {
        return Err(Error::MalformedWav(format!(
            "RIFF size {riff_size} does not match file length {}",
            bytes.len()
        )));
    }
    if r.take(4, "WAVE magic")? != b"WAVE" {
        return Err(Error::MalformedWav("missing WAVE magic".to_string()));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    while !r.is_empty() {
        let id = r.take(4, "chunk id")?;
        let size = r.u32("chunk size")? as usize;
        let body = r.take(size, "chunk body")?;
        if size % 2 == 1 {
            r.take(1, "chunk pad byte")?;
        }
        match id {
            b"fmt " => {
                if fmt.is_some() {
                    return Err(Error::MalformedWav("duplicate fmt chunk".to_string()));
                }
                fmt = Some(parse_fmt(body)?);
            }
            b"data" => {
                if data.is_some() {
                    return Err(Error::MalformedWav("duplicate data chunk".to_string()));
                }
                data = Some(body);
            }
            _ => {}
        }
    }
    let fmt = fmt.ok_or_else(|| Error::MalformedWav("missing fmt chunk".to_string()))?;
    let data = data.ok_or_else(|| Error::MalformedWav("missing data chunk".to_string()))?;
    if data.len() % 2 != 0 {
        return Err(Error::MalformedWav(format!(
            "data chunk length {} is not a whole number of 16-bit samples",
            data.len()
        )));
    }
    let samples = data
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / SCALE)
        .collect();
    Waveform::new(samples, fmt.sample_rate)
}

/// Reads and decodes a PCM16 mono WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<WavFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(WavFile {
        waveform: parse_wav(&bytes)?,
    })
}

/// Encodes `w` as a PCM16 mono WAV file at `path` and returns how many
/// samples fell outside [-1, 1] and were hard-clipped.
///
/// In-range samples round to the nearest int16 level, so one decode is
/// within half a quantization step except at exactly +1.0, which saturates
/// to the top level without counting as a clip.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<usize> {
    let path = path.as_ref();
    let mut clipped = 0usize;
    let mut payload = Vec::with_capacity(2 * w.len());
    for &s in w.samples() {
        if !(-1.0..=1.0).contains(&s) {
            clipped += 1;
        }
        let q = (s * SCALE).round().clamp(-32768.0, 32767.0) as i16;
        payload.extend_from_slice(&q.to_le_bytes());
    }

    let mut bytes = Vec::with_capacity(44 + payload.len());
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + payload.len() as u32).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&w.sample_rate().to_le_bytes());
    bytes.extend_from_slice(&(w.sample_rate() * 2).to_le_bytes());
    bytes.extend_from_slice(&2u16.to_le_bytes());
    bytes.extend_from_slice(&16u16.to_le_bytes());
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&payload);

    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(clipped)
}

/// Recursively collects every `.wav` path under `dir` (extension matched
/// case-insensitively) in lexicographic path order, independent of the
/// order the filesystem yields entries.
pub fn scan_corpus(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    collect_wavs(dir, &mut paths)?;
    paths.sort();
    Ok(paths)
}

fn collect_wavs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let kind = entry.file_type().map_err(|e| Error::io(&path, e))?;
        if kind.is_dir() {
            collect_wavs(&path, out)?;
        } else if path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("wav"))
        {
            out.push(path);
        }
    }
    Ok(())
}

/// Reads every WAV under `dir` in scan order, requiring at least one file
/// and a single common sample rate across the corpus.
pub fn read_corpus(dir: impl AsRef<Path>) -> Result<Vec<WavFile>> {
    let dir = dir.as_ref();
    let paths = scan_corpus(dir)?;
    if paths.is_empty() {
        return Err(Error::invalid(format!(
            "no .wav files found under {}",
            dir.display()
        )));
    }
    let mut files = Vec::with_capacity(paths.len());
    for path in &paths {
        let file = read_wav(path)?;
        if let Some(first) = files.first() {
            let first: &WavFile = first;
            if file.waveform().sample_rate() != first.waveform().sample_rate() {
                return Err(Error::invalid(format!(
                    "sample rate {} of {} differs from {} used earlier in the corpus",
                    file.waveform().sample_rate(),
                    path.display(),
                    first.waveform().sample_rate()
                )));
            }
        }
        files.push(file);
    }
    Ok(files)
}
