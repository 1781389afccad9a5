//! Binary dataset container: magic "XPASSDS1", a length-prefixed JSON
//! header, then per-sample little-endian f32 feature blocks and i32 zone
//! labels, samples in train/val/test order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::zones::{GridScheme, ZoneLabel};

use super::SequenceSample;

const MAGIC: &[u8; 8] = b"XPASSDS1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub grid: GridScheme,
    pub seq_len: usize,
    pub feature_dim: usize,
    pub context_dim: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub event_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    /// All samples, train then val then test.
    pub samples: Vec<SequenceSample>,
}

impl Dataset {
    pub fn from_splits(
        grid: GridScheme,
        seed: u64,
        train: Vec<SequenceSample>,
        val: Vec<SequenceSample>,
        test: Vec<SequenceSample>,
    ) -> Self {
        let context_dim = train
            .first()
            .or(val.first())
            .or(test.first())
            .map(|s| s.context.len())
            .unwrap_or(0);
        let header = DatasetHeader {
            grid,
            seq_len: super::SEQ_LEN,
            feature_dim: super::FEATURE_DIM,
            context_dim,
            seed,
            n_train: train.len(),
            n_val: val.len(),
            n_test: test.len(),
            event_ids: train
                .iter()
                .chain(&val)
                .chain(&test)
                .map(|s| s.event_id)
                .collect(),
        };
        let mut samples = train;
        samples.extend(val);
        samples.extend(test);
        Dataset { header, samples }
    }

    pub fn train(&self) -> &[SequenceSample] {
        &self.samples[..self.header.n_train]
    }

    pub fn val(&self) -> &[SequenceSample] {
        &self.samples[self.header.n_train..self.header.n_train + self.header.n_val]
    }

    pub fn test(&self) -> &[SequenceSample] {
        &self.samples[self.header.n_train + self.header.n_val..]
    }

    pub fn find_event(&self, event_id: u32) -> Option<&SequenceSample> {
        self.samples.iter().find(|s| s.event_id == event_id)
    }
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    let header = serde_json::to_vec(&ds.header)
        .map_err(|e| Error::Data(format!("cannot encode dataset header: {e}")))?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for s in &ds.samples {
        if s.features.len() != ds.header.seq_len * ds.header.feature_dim {
            return Err(Error::Dimension(format!(
                "sample {} has {} features, header implies {}",
                s.event_id,
                s.features.len(),
                ds.header.seq_len * ds.header.feature_dim
            )));
        }
        if s.context.len() != ds.header.context_dim {
            return Err(Error::Dimension(format!(
                "sample {} has context dim {}, header says {}",
                s.event_id,
                s.context.len(),
                ds.header.context_dim
            )));
        }
        for v in &s.features {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &s.context {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&(s.label.zx as i32).to_le_bytes())?;
        w.write_all(&(s.label.zy as i32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Data(format!("truncated dataset file: {e}")))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "{} is not a dataset container (bad magic)",
            path.display()
        )));
    }
    let mut len = [0u8; 4];
    read_exact(&mut r, &mut len)?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(len) as usize];
    read_exact(&mut r, &mut header_bytes)?;
    let header: DatasetHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Data(format!("bad dataset header: {e}")))?;

    let n = header.n_train + header.n_val + header.n_test;
    if header.event_ids.len() != n {
        return Err(Error::Data(format!(
            "header lists {} event ids for {} samples",
            header.event_ids.len(),
            n
        )));
    }
    let feat_len = header.seq_len * header.feature_dim;
    let mut samples = Vec::with_capacity(n);
    let mut f32buf = [0u8; 4];
    for &event_id in &header.event_ids {
        let mut features = Vec::with_capacity(feat_len);
        for _ in 0..feat_len {
            read_exact(&mut r, &mut f32buf)?;
            features.push(f32::from_le_bytes(f32buf));
        }
        let mut context = Vec::with_capacity(header.context_dim);
        for _ in 0..header.context_dim {
            read_exact(&mut r, &mut f32buf)?;
            context.push(f32::from_le_bytes(f32buf));
        }
        read_exact(&mut r, &mut f32buf)?;
        let zx = i32::from_le_bytes(f32buf);
        read_exact(&mut r, &mut f32buf)?;
        let zy = i32::from_le_bytes(f32buf);
        if zx < 0 || zy < 0 {
            return Err(Error::Data(format!("negative zone label for event {event_id}")));
        }
        samples.push(SequenceSample {
            features,
            context,
            label: ZoneLabel { zx: zx as usize, zy: zy as usize },
            event_id,
        });
    }
    Ok(Dataset { header, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_dataset, synth_generate, SynthRule};
    use crate::zones::ZoneGrid;

    #[test]
    fn container_roundtrip_bitwise() {
        let grid = ZoneGrid::coarse();
        let samples = synth_generate(30, 5, SynthRule::NearestTeammate, &grid);
        let (tr, va, te) = split_dataset(samples, 5).unwrap();
        let ds = Dataset::from_splits(GridScheme::Coarse, 5, tr, va, te);

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.xpds");
        let p2 = dir.path().join("b.xpds");
        save_dataset(&p1, &ds).unwrap();
        let loaded = load_dataset(&p1).unwrap();
        assert_eq!(loaded, ds);
        save_dataset(&p2, &loaded).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.bin");
        std::fs::write(&p, b"NOTADATASET").unwrap();
        assert!(matches!(load_dataset(&p), Err(Error::Data(_))));
    }
}
