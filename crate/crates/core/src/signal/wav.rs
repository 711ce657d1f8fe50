use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use super::Waveform;
use crate::{Error, Result};

const PCM16_SCALE: f64 = 32768.0;

/// Reads a PCM16 mono RIFF/WAVE file, scaling samples by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    // once the file is open, every read failure means a malformed header
    let reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| match e {
        hound::Error::Unsupported => Error::Unsupported(format!("{}", path.display())),
        other => Error::format(path, other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Unsupported(format!(
            "{}: {} channels, expected mono",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::Unsupported(format!(
            "{}: {:?} {}-bit, expected PCM16",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a PCM16 mono file. Values are rounded and clipped to the code range.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut writer = WavWriter::create(path, spec).map_err(to_io)?;
    for &s in &w.samples {
        let code = (s * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(code).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_and_clipping() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let w = Waveform::new(vec![0.0, 0.5, -1.0, 1.0], 16000).unwrap();
        write_wav(&w, &p).unwrap();
        let r = read_wav(&p).unwrap();
        assert_eq!(r.samples[..3], [0.0, 0.5, -1.0]);
        // 1.0 clips to the max code
        assert_eq!(r.samples[3], 32767.0 / 32768.0);
        assert_eq!(r.sample_rate, 16000);
    }

    #[test]
    fn empty_and_one_second() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.wav");
        write_wav(&Waveform::new(vec![], 16000).unwrap(), &p).unwrap();
        assert!(read_wav(&p).unwrap().is_empty());
        write_wav(&Waveform::new(vec![0.1; 16000], 16000).unwrap(), &p).unwrap();
        assert_eq!(read_wav(&p).unwrap().len(), 16000);
    }

    #[test]
    fn rejects_stereo_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut wr = WavWriter::create(&p, spec).unwrap();
        wr.write_sample(0i16).unwrap();
        wr.write_sample(0i16).unwrap();
        wr.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Unsupported(_))));

        let g = dir.path().join("g.wav");
        std::fs::write(&g, b"RIFFxxxxWAVEjunkjunk").unwrap();
        let r = read_wav(&g);
        assert!(matches!(r, Err(Error::Format { .. })), "{r:?}");
    }
}
