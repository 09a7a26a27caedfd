use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

const MAGIC: &[u8; 4] = b"DCST";
const VERSION: u16 = 1;

/// Time-ordered CSI matrices of one trajectory; all slots share a shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSequence {
    timeslots: Vec<ComplexMatrix>,
}

impl ChannelSequence {
    pub fn new(timeslots: Vec<ComplexMatrix>) -> Result<Self> {
        let Some(first) = timeslots.first() else {
            return Err(Error::InvalidDimension("a channel sequence needs at least one slot".into()));
        };
        let shape = first.shape();
        if timeslots.iter().any(|m| m.shape() != shape) {
            return Err(Error::Shape("timeslots of a sequence differ in shape".into()));
        }
        Ok(Self { timeslots })
    }

    pub fn timeslots(&self) -> &[ComplexMatrix] {
        &self.timeslots
    }

    pub fn len(&self) -> usize {
        self.timeslots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timeslots.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.timeslots[0].shape()
    }

    /// Every entry of every slot multiplied by `rot`.
    pub fn rotated(&self, rot: Complex64) -> Self {
        Self {
            timeslots: self.timeslots.iter().map(|m| m.scale(rot)).collect(),
        }
    }
}

/// Samples plus a train/validation partition. Validation indices are the
/// sorted complement of the training indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<ChannelSequence>,
    train: Vec<usize>,
    val: Vec<usize>,
}

impl Dataset {
    pub fn new(samples: Vec<ChannelSequence>, train: Vec<usize>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let (len, shape) = (first.len(), first.shape());
            if samples.iter().any(|s| s.len() != len || s.shape() != shape) {
                return Err(Error::Shape(
                    "dataset samples differ in slot count or matrix shape".into(),
                ));
            }
        }
        let mut seen = vec![false; samples.len()];
        for &i in &train {
            if i >= samples.len() || seen[i] {
                return Err(Error::Config(format!(
                    "training index {i} is out of range or repeated"
                )));
            }
            seen[i] = true;
        }
        let val = (0..samples.len()).filter(|&i| !seen[i]).collect();
        Ok(Self {
            samples,
            train,
            val,
        })
    }

    pub fn samples(&self) -> &[ChannelSequence] {
        &self.samples
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn val(&self) -> &[usize] {
        &self.val
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_timeslots(&self) -> usize {
        self.samples.first().map_or(0, |s| s.len())
    }

    /// `(n_b, n_f)` of every matrix, or `(0, 0)` when empty.
    pub fn matrix_shape(&self) -> (usize, usize) {
        self.samples.first().map_or((0, 0), |s| s.shape())
    }
}

/// Writes the dataset.
///
/// Layout, all integers little-endian:
/// `"DCST"`, `u16` version, `u32` n_samples, n_timeslots, n_b, n_f, then
/// every matrix row-major as `(re, im)` f64 pairs, then the split trailer
/// (`u32` n_train followed by that many `u32` training indices).
pub fn save(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let (n_b, n_f) = d.matrix_shape();
    let n_t = d.n_timeslots();
    let mut buf = Vec::with_capacity(22 + d.len() * n_t * n_b * n_f * 16 + 4 * (d.train.len() + 1));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [d.len(), n_t, n_b, n_f] {
        buf.extend_from_slice(&to_u32(dim)?.to_le_bytes());
    }
    for s in &d.samples {
        for m in &s.timeslots {
            for z in m.as_slice() {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
        }
    }
    buf.extend_from_slice(&to_u32(d.train.len())?.to_le_bytes());
    for &i in &d.train {
        buf.extend_from_slice(&to_u32(i)?.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Config(format!("{v} does not fit the u32 file field")))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!(
                    "truncated while reading {what}: need {n} bytes, {} left",
                    self.buf.len() - self.pos
                ),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Reads a dataset written by [`save`].
pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: format!("expected magic \"DCST\", found {:?}", String::from_utf8_lossy(magic)),
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            msg: format!("unsupported version {version}, expected {VERSION}"),
        });
    }
    let n_samples = r.u32("n_samples")?;
    let n_timeslots = r.u32("n_timeslots")?;
    let n_b = r.u32("n_b")?;
    let n_f = r.u32("n_f")?;
    let payload = n_samples
        .checked_mul(n_timeslots)
        .and_then(|v| v.checked_mul(n_b))
        .and_then(|v| v.checked_mul(n_f))
        .and_then(|v| v.checked_mul(16))
        .ok_or(Error::Format {
            offset: 6,
            msg: "dimensions overflow".into(),
        })?;
    if bytes.len() - r.pos < payload {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            msg: format!(
                "truncated payload: header promises {payload} bytes, {} present",
                bytes.len() - r.pos
            ),
        });
    }
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let mut slots = Vec::with_capacity(n_timeslots);
        for _ in 0..n_timeslots {
            let mut data = Vec::with_capacity(n_b * n_f);
            for _ in 0..n_b * n_f {
                let re = r.f64("payload")?;
                let im = r.f64("payload")?;
                data.push(Complex64::new(re, im));
            }
            slots.push(ComplexMatrix::from_vec(n_b, n_f, data)?);
        }
        samples.push(ChannelSequence::new(slots)?);
    }
    let n_train = r.u32("split trailer")?;
    let mut train = Vec::with_capacity(n_train.min(n_samples));
    for _ in 0..n_train {
        train.push(r.u32("training index")?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format {
            offset: r.pos as u64,
            msg: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Dataset::new(samples, train).map_err(|e| Error::Format {
        offset: r.pos as u64,
        msg: e.to_string(),
    })
}
