//! On-disk measurement formats.
//!
//! SMFS frame stacks: magic "SMFS", u32 version = 1, u32 width, u32 height,
//! u32 n_frames, then per frame f64 laser frequency (MHz), f64 excitation
//! polarization (deg), and width*height u32 counts. All little-endian,
//! row-major. Scan traces: CSV with header `freq_mhz,rate_kcps,rep`.

use crate::error::{Error, Result};
use crate::instrument::{CameraConfig, FrameStack, ScanTrace};
use crate::units::{Angle, CountRate, Frequency};
use std::io::{Read, Write};

pub const SMFS_MAGIC: [u8; 4] = *b"SMFS";
pub const SMFS_VERSION: u32 = 1;

/// Serialize a frame stack. The camera block is not part of the format; it
/// travels in the run manifest.
pub fn write_smfs<W: Write>(w: &mut W, stack: &FrameStack) -> Result<()> {
    let n_frames = stack.frames.len();
    assert_eq!(stack.freq_axis.len(), n_frames);
    assert_eq!(stack.theta_axis.len(), n_frames);
    w.write_all(&SMFS_MAGIC)?;
    w.write_all(&SMFS_VERSION.to_le_bytes())?;
    w.write_all(&stack.width.to_le_bytes())?;
    w.write_all(&stack.height.to_le_bytes())?;
    w.write_all(&(n_frames as u32).to_le_bytes())?;
    let pixels = (stack.width as usize) * (stack.height as usize);
    for t in 0..n_frames {
        assert_eq!(stack.frames[t].len(), pixels);
        w.write_all(&stack.freq_axis[t].mhz().to_le_bytes())?;
        w.write_all(&stack.theta_axis[t].degrees().to_le_bytes())?;
        let mut buf = Vec::with_capacity(pixels * 4);
        for &c in &stack.frames[t] {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Tracks the byte offset so format errors can name the failing position.
struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn take(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let at = self.offset;
        self.inner.read_exact(buf).map_err(|e| Error::Format {
            offset: at,
            message: format!("reading {what}: {e}"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.take(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let mut b = [0u8; 8];
        self.take(&mut b, what)?;
        Ok(f64::from_le_bytes(b))
    }
}

/// Deserialize a frame stack; `camera` re-attaches the detector geometry the
/// format does not carry.
pub fn read_smfs<R: Read>(r: &mut R, camera: CameraConfig) -> Result<FrameStack> {
    let mut c = Cursor { inner: r, offset: 0 };
    let mut magic = [0u8; 4];
    c.take(&mut magic, "magic")?;
    if magic != SMFS_MAGIC {
        return Err(Error::Format { offset: 0, message: format!("bad magic {magic:02x?}") });
    }
    let at = c.offset;
    let version = c.u32("version")?;
    if version != SMFS_VERSION {
        return Err(Error::Format {
            offset: at,
            message: format!("unsupported version {version}, expected {SMFS_VERSION}"),
        });
    }
    let width = c.u32("width")?;
    let height = c.u32("height")?;
    let n_frames = c.u32("frame count")? as usize;
    let pixels = width as usize * height as usize;
    if pixels == 0 {
        return Err(Error::Format { offset: 8, message: "zero-sized frames".into() });
    }

    let mut freq_axis = Vec::with_capacity(n_frames);
    let mut theta_axis = Vec::with_capacity(n_frames);
    let mut frames = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let at = c.offset;
        let f = c.f64("frame frequency")?;
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::Format {
                offset: at,
                message: format!("frame {t}: invalid frequency {f} MHz"),
            });
        }
        freq_axis.push(Frequency::from_mhz(f));
        let at = c.offset;
        let th = c.f64("frame polarization")?;
        if !th.is_finite() {
            return Err(Error::Format {
                offset: at,
                message: format!("frame {t}: invalid polarization {th}"),
            });
        }
        theta_axis.push(Angle::wrap(th));
        let mut buf = vec![0u8; pixels * 4];
        c.take(&mut buf, "frame counts")?;
        frames.push(buf.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect());
    }
    // a well-formed stream ends exactly at the last frame
    let mut extra = [0u8; 1];
    if c.inner.read(&mut extra).map_err(Error::Io)? != 0 {
        return Err(Error::Format { offset: c.offset, message: "trailing bytes after last frame".into() });
    }
    Ok(FrameStack { width, height, freq_axis, theta_axis, frames, camera })
}

/// Write scan traces as CSV rows `freq_mhz,rate_kcps,rep`.
pub fn write_traces_csv<W: Write>(w: W, traces: &[ScanTrace]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["freq_mhz", "rate_kcps", "rep"])?;
    for t in traces {
        for (f, r) in t.freq.iter().zip(&t.rate) {
            wtr.write_record([
                format!("{:.6}", f.mhz()),
                format!("{:.6}", r.kcps()),
                t.rep_index.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Read traces back, grouping rows by their `rep` column.
pub fn read_traces_csv<R: Read>(r: R) -> Result<Vec<ScanTrace>> {
    let mut rdr = csv::Reader::from_reader(r);
    {
        let headers = rdr.headers()?;
        if headers != vec!["freq_mhz", "rate_kcps", "rep"] {
            return Err(Error::Format {
                offset: 0,
                message: format!("unexpected trace CSV header {headers:?}"),
            });
        }
    }
    let mut traces: Vec<ScanTrace> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let pos = rec.position().map(|p| p.byte()).unwrap_or(0);
        let parse = |i: usize, what: &str| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Format { offset: pos, message: format!("bad {what} field") })
        };
        let f = parse(0, "freq_mhz")?;
        let rate = parse(1, "rate_kcps")?;
        let rep = parse(2, "rep")? as u32;
        match traces.last_mut() {
            Some(t) if t.rep_index == rep => {
                t.freq.push(Frequency::from_mhz(f));
                t.rate.push(CountRate::from_kcps(rate));
            }
            _ => traces.push(ScanTrace {
                freq: vec![Frequency::from_mhz(f)],
                rate: vec![CountRate::from_kcps(rate)],
                rep_index: rep,
            }),
        }
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_stack() -> FrameStack {
        FrameStack {
            width: 3,
            height: 2,
            freq_axis: vec![Frequency::from_mhz(381.9e6), Frequency::from_mhz(381.9e6 + 20.0)],
            theta_axis: vec![Angle::wrap(0.0), Angle::wrap(30.0)],
            frames: vec![vec![0, 1, 2, 3, 4, 5], vec![5, 4, 3, 2, 1, 0]],
            camera: CameraConfig::default(),
        }
    }

    #[test]
    fn smfs_round_trips() {
        let stack = small_stack();
        let mut buf = Vec::new();
        write_smfs(&mut buf, &stack).unwrap();
        let back = read_smfs(&mut buf.as_slice(), CameraConfig::default()).unwrap();
        assert_eq!(back.width, 3);
        assert_eq!(back.height, 2);
        assert_eq!(back.frames, stack.frames);
        assert_eq!(back.freq_axis, stack.freq_axis);
        assert_eq!(back.theta_axis, stack.theta_axis);
    }

    #[test]
    fn smfs_layout_is_fixed() {
        let stack = small_stack();
        let mut buf = Vec::new();
        write_smfs(&mut buf, &stack).unwrap();
        assert_eq!(&buf[0..4], b"SMFS");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(buf[16..20].try_into().unwrap()), 2);
        // first frame header at byte 20
        assert_eq!(f64::from_le_bytes(buf[20..28].try_into().unwrap()), 381.9e6);
        assert_eq!(buf.len(), 20 + 2 * (16 + 6 * 4));
    }

    #[test]
    fn bad_magic_names_offset_zero() {
        let mut buf = Vec::new();
        write_smfs(&mut buf, &small_stack()).unwrap();
        buf[0] = b'X';
        match read_smfs(&mut buf.as_slice(), CameraConfig::default()) {
            Err(Error::Format { offset: 0, .. }) => {}
            other => panic!("expected format error at 0, got {other:?}"),
        }
    }

    #[test]
    fn truncated_stream_names_failing_offset() {
        let mut buf = Vec::new();
        write_smfs(&mut buf, &small_stack()).unwrap();
        buf.truncate(30);
        match read_smfs(&mut buf.as_slice(), CameraConfig::default()) {
            Err(Error::Format { offset, .. }) => assert!(offset >= 20, "offset {offset}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_is_reported_at_offset_4() {
        let mut buf = Vec::new();
        write_smfs(&mut buf, &small_stack()).unwrap();
        buf[4] = 9;
        match read_smfs(&mut buf.as_slice(), CameraConfig::default()) {
            Err(Error::Format { offset: 4, message }) => assert!(message.contains("version")),
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let mut buf = Vec::new();
        write_smfs(&mut buf, &small_stack()).unwrap();
        buf.push(0);
        assert!(matches!(
            read_smfs(&mut buf.as_slice(), CameraConfig::default()),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn traces_csv_round_trips() {
        let traces = vec![
            ScanTrace {
                freq: vec![Frequency::from_mhz(1e6), Frequency::from_mhz(1e6 + 5.0)],
                rate: vec![CountRate::from_kcps(10.5), CountRate::from_kcps(0.25)],
                rep_index: 0,
            },
            ScanTrace {
                freq: vec![Frequency::from_mhz(1e6)],
                rate: vec![CountRate::from_kcps(3.0)],
                rep_index: 1,
            },
        ];
        let mut buf = Vec::new();
        write_traces_csv(&mut buf, &traces).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("freq_mhz,rate_kcps,rep\n"));
        let back = read_traces_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].freq, traces[0].freq);
        assert_eq!(back[0].rate, traces[0].rate);
        assert_eq!(back[1].rep_index, 1);
    }
}
