//! Dataset export/import.
//!
//! Each split becomes a line-oriented text file, one example per line,
//! `src_tokens<TAB>tgt_tokens` with space-separated ids (the source
//! field is empty for continuous-input tasks). Examples with frames
//! additionally get a sidecar `<name>.frames.bin` of little-endian
//! 64-bit floats plus an index file `<name>.frames.idx` with one
//! `example_id byte_offset frame_count` line per example. The frame
//! width is implicit: it is the bin-file length divided by the total
//! frame count (times 8 bytes).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::Example;
use crate::error::{Error, Result};

fn tokens_to_str(tokens: &[u32]) -> String {
    tokens
        .iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn tokens_from_str(field: &str, lineno: usize) -> Result<Vec<u32>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(' ')
        .map(|t| {
            t.parse::<u32>().map_err(|_| {
                Error::InvalidData(format!("line {}: bad token id `{}`", lineno, t))
            })
        })
        .collect()
}

/// Write one split under `dir` with the given base name (e.g. `train`).
pub fn export_split(dir: &Path, name: &str, examples: &[Example]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = String::new();
    for ex in examples {
        text.push_str(&tokens_to_str(&ex.src));
        text.push('\t');
        text.push_str(&tokens_to_str(&ex.tgt));
        text.push('\n');
    }
    fs::write(dir.join(format!("{}.txt", name)), text)?;

    let with_frames: Vec<&Example> = examples.iter().filter(|e| e.frames.is_some()).collect();
    if !with_frames.is_empty() {
        if with_frames.len() != examples.len() {
            return Err(Error::InvalidData(
                "cannot export a split where only some examples carry frames".to_string(),
            ));
        }
        let mut bin = fs::File::create(dir.join(format!("{}.frames.bin", name)))?;
        let mut idx = String::new();
        let mut offset = 0u64;
        for ex in examples {
            let frames = ex.frames.as_ref().expect("checked above");
            let mut bytes = Vec::with_capacity(frames.len() * 8);
            for &v in frames {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            bin.write_all(&bytes)?;
            idx.push_str(&format!("{} {} {}\n", ex.id, offset, ex.n_frames));
            offset += bytes.len() as u64;
        }
        fs::write(dir.join(format!("{}.frames.idx", name)), idx)?;
    }
    Ok(())
}

/// Read one split back. If a frames sidecar exists the examples get
/// their frame blocks reattached by index order.
pub fn import_split(dir: &Path, name: &str) -> Result<Vec<Example>> {
    let text = fs::read_to_string(dir.join(format!("{}.txt", name)))?;
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let (src, tgt) = line.split_once('\t').ok_or_else(|| {
            Error::InvalidData(format!("line {}: expected src<TAB>tgt", lineno))
        })?;
        let src = tokens_from_str(src, lineno)?;
        let tgt = tokens_from_str(tgt, lineno)?;
        if tgt.is_empty() {
            return Err(Error::InvalidData(format!("line {}: empty target", lineno)));
        }
        examples.push(Example {
            id: i as u64,
            src,
            tgt,
            frames: None,
            n_frames: 0,
        });
    }

    let idx_path = dir.join(format!("{}.frames.idx", name));
    if idx_path.exists() {
        let bin = fs::read(dir.join(format!("{}.frames.bin", name)))?;
        let idx_text = fs::read_to_string(idx_path)?;
        let mut rows: Vec<(u64, u64, usize)> = Vec::new();
        let mut total_frames = 0usize;
        for (i, line) in idx_text.lines().enumerate() {
            let fields: Vec<&str> = line.split(' ').collect();
            if fields.len() != 3 {
                return Err(Error::InvalidData(format!(
                    "frames index line {}: expected `id offset count`",
                    i + 1
                )));
            }
            let parse = |s: &str| -> Result<u64> {
                s.parse::<u64>()
                    .map_err(|_| Error::InvalidData(format!("frames index line {}: bad number", i + 1)))
            };
            let (id, offset, count) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])? as usize);
            total_frames += count;
            rows.push((id, offset, count));
        }
        if rows.len() != examples.len() {
            return Err(Error::InvalidData(format!(
                "frames index has {} rows for {} examples",
                rows.len(),
                examples.len()
            )));
        }
        if total_frames == 0 || bin.len() % (8 * total_frames) != 0 {
            return Err(Error::InvalidData(format!(
                "frame file length {} is not a whole number of {}-frame floats",
                bin.len(),
                total_frames
            )));
        }
        let frame_dim = bin.len() / (8 * total_frames);
        for (ex, (id, offset, count)) in examples.iter_mut().zip(rows) {
            ex.id = id;
            let start = offset as usize;
            let len = count * frame_dim * 8;
            if start + len > bin.len() {
                return Err(Error::InvalidData(format!(
                    "frames for example {} run past the end of the frame file",
                    id
                )));
            }
            let mut frames = Vec::with_capacity(count * frame_dim);
            for chunk in bin[start..start + len].chunks_exact(8) {
                frames.push(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
            }
            ex.frames = Some(frames);
            ex.n_frames = count;
        }
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{generate, TaskKind, TaskSpec};

    fn small(kind: TaskKind) -> TaskSpec {
        TaskSpec {
            n_train: 12,
            n_dev: 4,
            n_test: 4,
            ..TaskSpec::new(kind)
        }
    }

    #[test]
    fn discrete_round_trip_preserves_tokens() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&small(TaskKind::ToyMt), 2).unwrap();
        export_split(dir.path(), "train", &ds.train).unwrap();
        let back = import_split(dir.path(), "train").unwrap();
        assert_eq!(back.len(), ds.train.len());
        for (a, b) in ds.train.iter().zip(&back) {
            assert_eq!(a.src, b.src);
            assert_eq!(a.tgt, b.tgt);
        }
    }

    #[test]
    fn frames_round_trip_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate(&small(TaskKind::ToyAsr), 4).unwrap();
        export_split(dir.path(), "dev", &ds.dev).unwrap();
        let back = import_split(dir.path(), "dev").unwrap();
        for (a, b) in ds.dev.iter().zip(&back) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.tgt, b.tgt);
            assert_eq!(a.n_frames, b.n_frames);
            let (fa, fb) = (a.frames.as_ref().unwrap(), b.frames.as_ref().unwrap());
            assert_eq!(fa.len(), fb.len());
            assert!(fa.iter().zip(fb).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn text_format_is_tab_separated_ids() {
        let dir = tempfile::tempdir().unwrap();
        let ex = Example {
            id: 0,
            src: vec![5, 9],
            tgt: vec![9, 5, 2],
            frames: None,
            n_frames: 0,
        };
        export_split(dir.path(), "test", &[ex]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("test.txt")).unwrap();
        assert_eq!(text, "5 9\t9 5 2\n");
    }

    #[test]
    fn malformed_lines_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.txt"), "1 2 3\n").unwrap();
        assert!(import_split(dir.path(), "bad").is_err());
        std::fs::write(dir.path().join("bad2.txt"), "1 x\t2\n").unwrap();
        assert!(import_split(dir.path(), "bad2").is_err());
    }
}
