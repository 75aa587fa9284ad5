//! Embedding files and evaluation reports.
//!
//! Binary embedding file, all integers little-endian:
//!
//! ```text
//! "MDNTEMB1"            8 bytes
//! n: u64, d: u32, g: u32, flags: u32
//! features              n·d f32, row-major
//! labels                n u32            (flags & 1)
//! targets               n·g f32          (flags & 2)
//! patient ids           n × (u32 len, UTF-8 bytes)   (flags & 4)
//! splits                n u8: 0 train, 1 val, 2 test (flags & 8)
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, LabeledEmbeddings, Split};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"MDNTEMB1";
pub const FLAG_LABELS: u32 = 1;
pub const FLAG_TARGETS: u32 = 2;
pub const FLAG_PATIENTS: u32 = 4;
pub const FLAG_SPLITS: u32 = 8;

fn format_err(msg: impl Into<String>) -> EvalError {
    EvalError::Format(msg.into())
}

pub fn write_embeddings<W: Write>(w: &mut W, data: &LabeledEmbeddings) -> Result<(), EvalError> {
    data.validate()?;
    let mut flags = 0;
    if data.labels.is_some() {
        flags |= FLAG_LABELS;
    }
    if data.targets.is_some() {
        flags |= FLAG_TARGETS;
    }
    if data.patient_ids.is_some() {
        flags |= FLAG_PATIENTS;
    }
    if data.splits.is_some() {
        flags |= FLAG_SPLITS;
    }
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&(data.n as u64).to_le_bytes())?;
    w.write_all(&(data.d as u32).to_le_bytes())?;
    w.write_all(&(data.g as u32).to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())?;
    for v in &data.x {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    if let Some(labels) = &data.labels {
        for l in labels {
            w.write_all(&l.to_le_bytes())?;
        }
    }
    if let Some(t) = &data.targets {
        for v in t {
            w.write_all(&(*v as f32).to_le_bytes())?;
        }
    }
    if let Some(ids) = &data.patient_ids {
        for id in ids {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
        }
    }
    if let Some(s) = &data.splits {
        let bytes: Vec<u8> = s.iter().map(|s| *s as u8).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], EvalError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| format_err(format!("truncated embedding file: {e}")))?;
    Ok(b)
}

fn read_f32s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>, EvalError> {
    let mut buf = vec![0u8; count * 4];
    r.read_exact(&mut buf)
        .map_err(|e| format_err(format!("truncated embedding file: {e}")))?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

pub fn read_embeddings<R: Read>(r: &mut R) -> Result<LabeledEmbeddings, EvalError> {
    let magic: [u8; 8] = read_array(r)?;
    if &magic != EMBEDDING_MAGIC {
        return Err(format_err("bad magic, not an embedding file"));
    }
    let n = u64::from_le_bytes(read_array(r)?) as usize;
    let d = u32::from_le_bytes(read_array(r)?) as usize;
    let g = u32::from_le_bytes(read_array(r)?) as usize;
    let flags = u32::from_le_bytes(read_array(r)?);
    if flags & !(FLAG_LABELS | FLAG_TARGETS | FLAG_PATIENTS | FLAG_SPLITS) != 0 {
        return Err(format_err(format!("unknown flags {flags:#x}")));
    }
    let x = read_f32s(r, n * d)?;
    let labels = if flags & FLAG_LABELS != 0 {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(u32::from_le_bytes(read_array(r)?));
        }
        Some(v)
    } else {
        None
    };
    let targets = if flags & FLAG_TARGETS != 0 {
        Some(read_f32s(r, n * g)?)
    } else {
        None
    };
    let patient_ids = if flags & FLAG_PATIENTS != 0 {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let len = u32::from_le_bytes(read_array(r)?) as usize;
            let mut b = vec![0u8; len];
            r.read_exact(&mut b)
                .map_err(|e| format_err(format!("truncated patient id: {e}")))?;
            v.push(String::from_utf8(b).map_err(|_| format_err("patient id is not UTF-8"))?);
        }
        Some(v)
    } else {
        None
    };
    let splits = if flags & FLAG_SPLITS != 0 {
        let mut b = vec![0u8; n];
        r.read_exact(&mut b)
            .map_err(|e| format_err(format!("truncated split block: {e}")))?;
        Some(b.into_iter().map(Split::try_from).collect::<Result<Vec<_>, _>>()?)
    } else {
        None
    };
    let data = LabeledEmbeddings {
        n,
        d,
        x,
        labels,
        g,
        targets,
        patient_ids,
        splits,
    };
    data.validate()?;
    Ok(data)
}

pub fn load_embeddings(path: &Path) -> Result<LabeledEmbeddings, EvalError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_embeddings(&mut f)
}

pub fn save_embeddings(path: &Path, data: &LabeledEmbeddings) -> Result<(), EvalError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_embeddings(&mut f, data)?;
    f.flush()?;
    Ok(())
}

/// Reads a small CSV fixture. Columns are recognised by header name:
/// `label`, `patient`, `split` (train/val/test), features `f<i>` and
/// regression targets `t<i>`, each family in header order.
pub fn read_embeddings_csv<R: Read>(r: R) -> Result<LabeledEmbeddings, EvalError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| format_err(e.to_string()))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (label_col, patient_col, split_col) = (col("label"), col("patient"), col("split"));
    let family = |prefix: char| -> Vec<usize> {
        headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(prefix) && h[1..].parse::<usize>().is_ok())
            .map(|(i, _)| i)
            .collect()
    };
    let feats = family('f');
    let tgts = family('t');
    if feats.is_empty() {
        return Err(format_err("CSV has no f<i> feature columns"));
    }

    let mut x = Vec::new();
    let mut labels = Vec::new();
    let mut targets = Vec::new();
    let mut patients = Vec::new();
    let mut splits = Vec::new();
    let mut n = 0;
    for (lineno, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| format_err(format!("row {}: {e}", lineno + 2)))?;
        let num = |i: usize| -> Result<f64, EvalError> {
            rec[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| format_err(format!("row {}, column {}: {e}", lineno + 2, &headers[i])))
        };
        for &i in &feats {
            x.push(num(i)?);
        }
        for &i in &tgts {
            targets.push(num(i)?);
        }
        if let Some(i) = label_col {
            labels.push(rec[i].trim().parse::<u32>().map_err(|e| {
                format_err(format!("row {}: bad label: {e}", lineno + 2))
            })?);
        }
        if let Some(i) = patient_col {
            patients.push(rec[i].to_string());
        }
        if let Some(i) = split_col {
            splits.push(rec[i].trim().parse::<Split>()?);
        }
        n += 1;
    }
    let data = LabeledEmbeddings {
        n,
        d: feats.len(),
        x,
        labels: label_col.map(|_| labels),
        g: tgts.len(),
        targets: (!tgts.is_empty()).then_some(targets),
        patient_ids: patient_col.map(|_| patients),
        splits: split_col.map(|_| splits),
    };
    data.validate()?;
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub metric: String,
    pub mean: f64,
    pub std_of_mean: f64,
    pub runs: usize,
}

/// Evaluation report keyed by task name.
pub type Report = BTreeMap<String, TaskResult>;

pub fn write_report(path: &Path, report: &Report) -> Result<(), EvalError> {
    let mut json = serde_json::to_vec_pretty(report).map_err(|e| format_err(e.to_string()))?;
    json.push(b'\n');
    std::fs::write(path, json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LabeledEmbeddings {
        LabeledEmbeddings {
            n: 3,
            d: 2,
            x: vec![0.5, -1.0, 2.0, 0.25, 3.0, 4.0],
            labels: Some(vec![0, 1, 1]),
            g: 1,
            targets: Some(vec![1.5, 2.5, -0.5]),
            patient_ids: Some(vec!["p1".into(), "p1".into(), "π2".into()]),
            splits: Some(vec![Split::Train, Split::Val, Split::Test]),
        }
    }

    #[test]
    fn binary_round_trip() {
        let data = sample();
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &data).unwrap();
        assert_eq!(&buf[..8], b"MDNTEMB1");
        let back = read_embeddings(&mut buf.as_slice()).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &sample()).unwrap();
        assert!(matches!(read_embeddings(&mut &buf[..buf.len() - 1]), Err(EvalError::Format(_))));
        buf[0] = b'X';
        assert!(matches!(read_embeddings(&mut buf.as_slice()), Err(EvalError::Format(_))));
    }

    #[test]
    fn csv_fixture() {
        let text = "patient,split,label,f0,f1,t0\np1,train,0,0.5,-1,1.5\np1,val,1,2,0.25,2.5\nπ2,test,1,3,4,-0.5\n";
        let data = read_embeddings_csv(text.as_bytes()).unwrap();
        assert_eq!(data, sample());
        let bad = "label,f0\nx,1\n";
        assert!(read_embeddings_csv(bad.as_bytes()).is_err());
    }
}
