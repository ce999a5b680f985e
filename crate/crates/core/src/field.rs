//! Gridded fields and the joint two-modality container.
//!
//! Flat layout convention, used everywhere a field meets a flat vector: the
//! main block comes first, then the aux block; within a block values are
//! row-major over pixels with channels fastest, i.e. index
//! `(y * W + x) * C + c`. A pixel therefore owns a contiguous run of its
//! channels, which is what pixel-granular masks select.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// An H x W grid with C channels, row-major with channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(h: usize, w: usize, c: usize) -> Self {
        Self {
            h,
            w,
            c,
            data: vec![0.0; h * w * c],
        }
    }

    pub fn from_data(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w * c {
            return Err(Error::DimensionMismatch {
                expected: h * w * c,
                got: data.len(),
            });
        }
        Ok(Self { h, w, c, data })
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.w + x) * self.c + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.w + x) * self.c + c] = v;
    }

    /// The channel values of one pixel (flat pixel index).
    #[inline]
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.c..(p + 1) * self.c]
    }

    /// Write one channel as an H x W CSV grid for inspection.
    pub fn export_channel_csv(&self, channel: usize, path: impl AsRef<Path>) -> Result<()> {
        if channel >= self.c {
            return Err(Error::IndexOutOfRange {
                index: channel,
                dim: self.c,
            });
        }
        let mut out = BufWriter::new(File::create(path)?);
        for y in 0..self.h {
            let row: Vec<String> = (0..self.w)
                .map(|x| format!("{}", self.get(y, x, channel)))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Grid dimensions and channel split of a joint problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct JointLayout {
    pub h: usize,
    pub w: usize,
    pub c_main: usize,
    pub c_aux: usize,
}

impl JointLayout {
    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn main_len(&self) -> usize {
        self.h * self.w * self.c_main
    }

    pub fn aux_len(&self) -> usize {
        self.h * self.w * self.c_aux
    }

    /// Total flattened dimension of the joint field.
    pub fn joint_len(&self) -> usize {
        self.main_len() + self.aux_len()
    }
}

/// A main-modality grid and its auxiliary counterpart, with channel names
/// recording which modality each channel belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct JointField {
    pub main: Field,
    pub aux: Field,
    pub channel_names: Vec<String>,
}

impl JointField {
    pub fn new(main: Field, aux: Field, channel_names: Vec<String>) -> Result<Self> {
        if main.h != aux.h || main.w != aux.w {
            return Err(Error::InvalidArgument(format!(
                "spatial dims disagree: main {}x{}, aux {}x{}",
                main.h, main.w, aux.h, aux.w
            )));
        }
        if channel_names.len() != main.c + aux.c {
            return Err(Error::DimensionMismatch {
                expected: main.c + aux.c,
                got: channel_names.len(),
            });
        }
        Ok(Self {
            main,
            aux,
            channel_names,
        })
    }

    /// Default channel names `main0..`, `aux0..`.
    pub fn with_default_names(main: Field, aux: Field) -> Result<Self> {
        let names = (0..main.c)
            .map(|i| format!("main{i}"))
            .chain((0..aux.c).map(|i| format!("aux{i}")))
            .collect();
        Self::new(main, aux, names)
    }

    pub fn layout(&self) -> JointLayout {
        JointLayout {
            h: self.main.h,
            w: self.main.w,
            c_main: self.main.c,
            c_aux: self.aux.c,
        }
    }

    /// Flatten to `[main block, aux block]`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.main.len() + self.aux.len());
        out.extend_from_slice(&self.main.data);
        out.extend_from_slice(&self.aux.data);
        out
    }

    /// Inverse of [`Self::flatten`] for the given layout.
    pub fn from_flat(layout: &JointLayout, flat: &[f64], channel_names: Vec<String>) -> Result<Self> {
        if flat.len() != layout.joint_len() {
            return Err(Error::DimensionMismatch {
                expected: layout.joint_len(),
                got: flat.len(),
            });
        }
        let main = Field::from_data(
            layout.h,
            layout.w,
            layout.c_main,
            flat[..layout.main_len()].to_vec(),
        )?;
        let aux = Field::from_data(
            layout.h,
            layout.w,
            layout.c_aux,
            flat[layout.main_len()..].to_vec(),
        )?;
        Self::new(main, aux, channel_names)
    }
}

const FIELD_MAGIC: &[u8; 4] = b"JFLD";
const FIELD_VERSION: u32 = 1;

/// Write joint fields as a binary container: per field a header
/// `(magic, version, H, W, C_main, C_aux, channel names)` followed by the
/// flattened values as little-endian f32. Multiple fields simply concatenate.
pub fn write_joint_fields(path: impl AsRef<Path>, fields: &[JointField]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for field in fields {
        write_one(&mut w, field)?;
    }
    w.flush()?;
    Ok(())
}

fn write_one(w: &mut impl Write, field: &JointField) -> Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&FIELD_VERSION.to_le_bytes())?;
    let layout = field.layout();
    for v in [layout.h, layout.w, layout.c_main, layout.c_aux] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    for name in &field.channel_names {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
    }
    for &v in field.main.data.iter().chain(&field.aux.data) {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Read every joint field from a container written by [`write_joint_fields`].
pub fn read_joint_fields(path: impl AsRef<Path>) -> Result<Vec<JointField>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut fields = Vec::new();
    loop {
        let mut magic = [0u8; 4];
        match r.read(&mut magic)? {
            0 => break,
            4 => {}
            n => {
                // a short read may still be a split header; try to finish it
                let mut rest = vec![0u8; 4 - n];
                r.read_exact(&mut rest).map_err(|_| {
                    Error::FieldContainer("trailing bytes are not a field header".into())
                })?;
                magic[n..].copy_from_slice(&rest);
            }
        }
        if &magic != FIELD_MAGIC {
            return Err(Error::FieldContainer("bad magic bytes".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FIELD_VERSION {
            return Err(Error::FieldContainer(format!(
                "unsupported version {version}"
            )));
        }
        let h = read_u32(&mut r)? as usize;
        let w = read_u32(&mut r)? as usize;
        let c_main = read_u32(&mut r)? as usize;
        let c_aux = read_u32(&mut r)? as usize;
        let mut names = Vec::with_capacity(c_main + c_aux);
        for _ in 0..c_main + c_aux {
            let len = read_u32(&mut r)? as usize;
            if len > 1 << 16 {
                return Err(Error::FieldContainer(format!(
                    "channel name length {len} implausible"
                )));
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)
                .map_err(|_| Error::FieldContainer("truncated channel name".into()))?;
            names.push(String::from_utf8(buf).map_err(|_| {
                Error::FieldContainer("channel name is not valid utf-8".into())
            })?);
        }
        let count = h * w * (c_main + c_aux);
        let mut payload = vec![0u8; count * 4];
        r.read_exact(&mut payload)
            .map_err(|_| Error::FieldContainer("truncated field payload".into()))?;
        let values: Vec<f64> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let layout = JointLayout {
            h,
            w,
            c_main,
            c_aux,
        };
        fields.push(JointField::from_flat(&layout, &values, names)?);
    }
    Ok(fields)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::FieldContainer("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}
