//! Little-endian trace dump:
//!
//! ```text
//! "FTRC" | u32 version = 1
//! per trace, until end of file:
//!     u16 S | u32 d | f32 deltas[S*d] | f32 coord_x_m | f32 coord_y_m
//!     u16 client_id | u16 round
//! ```
//!
//! Map ids are not part of the format.

use std::io::{ErrorKind, Read, Write};

use crate::error::{Error, Result};

use super::trace::UploadTrace;

pub const TRACE_MAGIC: &[u8; 4] = b"FTRC";
pub const TRACE_VERSION: u32 = 1;

/// One trace as stored in a dump.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpedTrace {
    pub steps: Vec<Vec<f32>>,
    pub coord_m: [f32; 2],
    pub client_id: u16,
    pub round: u16,
}

fn narrow<U: TryFrom<usize>>(v: usize, what: &str) -> Result<U> {
    U::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit the trace format")))
}

pub fn write_traces<W: Write>(mut w: W, traces: &[UploadTrace]) -> Result<()> {
    w.write_all(TRACE_MAGIC)?;
    w.write_all(&TRACE_VERSION.to_le_bytes())?;
    for t in traces {
        let d = t.steps.first().map_or(0, |s| s.len());
        w.write_all(&narrow::<u16>(t.steps.len(), "step count")?.to_le_bytes())?;
        w.write_all(&narrow::<u32>(d, "dimension")?.to_le_bytes())?;
        for s in &t.steps {
            if s.len() != d {
                return Err(Error::Format("trace steps differ in length".into()));
            }
            for &v in s.as_slice() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.write_all(&(t.true_coord_m[0] as f32).to_le_bytes())?;
        w.write_all(&(t.true_coord_m[1] as f32).to_le_bytes())?;
        w.write_all(&narrow::<u16>(t.client_id, "client id")?.to_le_bytes())?;
        w.write_all(&narrow::<u16>(t.round, "round")?.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated trace dump: {e}")))?;
    Ok(b)
}

pub fn read_traces<R: Read>(mut r: R) -> Result<Vec<DumpedTrace>> {
    let magic: [u8; 4] = read_array(&mut r)?;
    if &magic != TRACE_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != TRACE_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    loop {
        let mut head = [0u8; 2];
        match r.read_exact(&mut head) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let s = u16::from_le_bytes(head) as usize;
        let d = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let steps = (0..s)
            .map(|_| (0..d).map(|_| Ok(f32::from_le_bytes(read_array(&mut r)?))).collect())
            .collect::<Result<Vec<Vec<f32>>>>()?;
        let x = f32::from_le_bytes(read_array(&mut r)?);
        let y = f32::from_le_bytes(read_array(&mut r)?);
        let client_id = u16::from_le_bytes(read_array(&mut r)?);
        let round = u16::from_le_bytes(read_array(&mut r)?);
        out.push(DumpedTrace {
            steps,
            coord_m: [x, y],
            client_id,
            round,
        });
    }
    Ok(out)
}
